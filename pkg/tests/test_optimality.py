import numpy as np
import pytest

from ccbounds.cbox import CBoxError, InputPrior, identity_box, random_box
from ccbounds.dual import DualCertificate, extract_certificate, solve_dual
from ccbounds.optimality import (check_conditions, check_conditions_reduced, corollary1_normalize,
                                 duality_gap, objective_pair, reconstruct_policy, soundness_radius)
from ccbounds.primal import product_policy, solve_primal


@pytest.fixture
def solved(rng):
    box = random_box(rng, 2, 3, 2)
    primal = solve_primal(box)
    return box, primal, extract_certificate(primal)


def test_optimal_pair_passes(solved):
    box, primal, cert = solved
    rep = check_conditions(primal.policy, cert, box)
    assert rep.passed, rep.residuals
    assert rep.worst <= 1e-8


def test_reduced_check_agrees(solved):
    box, primal, cert = solved
    full = check_conditions(primal.policy, cert, box)
    red = check_conditions_reduced(primal.policy.mix, cert, box, primal.policy.prior)
    assert full.passed == red.passed
    rebuilt = reconstruct_policy(primal.policy.mix, cert, box, primal.policy.prior)
    assert np.abs(rebuilt.cond - primal.policy.cond).max() <= 1e-8


def test_perturbation_fails(solved):
    box, primal, cert = solved
    lam = cert.lam.copy()
    idx = np.unravel_index(np.argmax(box.prob), box.shape)
    lam[idx] += 0.01
    rep = check_conditions(primal.policy, DualCertificate(lam), box)
    assert not rep.passed
    assert rep.worst > 1e-3
    red = check_conditions_reduced(primal.policy.mix, DualCertificate(lam), box, primal.policy.prior)
    assert not red.passed


def test_suboptimal_policy_fails(solved):
    box, primal, cert = solved
    rep = check_conditions(product_policy(box, primal.policy.prior), cert, box)
    assert not rep.passed


def test_soundness_radius_covers_objective_gap(solved):
    box, primal, cert = solved
    rep = check_conditions(primal.policy, cert, box)
    value, dual = objective_pair(primal.policy, cert, box)
    assert abs(value - dual) <= soundness_radius(rep, cert, box)


def test_duality_gap(solved, rng):
    box, primal, _ = solved
    dual = solve_dual(box)
    assert 0 <= duality_gap(primal, dual) <= 1e-6
    other = solve_dual(random_box(rng, 2, 3, 2))
    with pytest.raises(CBoxError):
        duality_gap(primal, other)


def test_impossible_entries_pinned_to_minus_infinity():
    box = identity_box(2, 2)
    prior = InputPrior.uniform(2)
    cert = DualCertificate(np.log(np.full(box.shape, 0.5)) + 0.3 * (box.prob > 0))
    norm = corollary1_normalize(cert, box)
    assert np.all(np.isneginf(norm.lam[box.prob == 0]))
    from ccbounds.dual import dual_objective, log_slacks
    assert dual_objective(norm, box, prior) == dual_objective(cert, box, prior)
    assert np.all(log_slacks(norm, prior) <= log_slacks(cert, prior) + 1e-15)


def test_shape_mismatch():
    box = identity_box(2, 1)
    pol = product_policy(box, InputPrior.uniform(2))
    with pytest.raises(CBoxError):
        check_conditions(pol, DualCertificate.zeros((2, 2, 2)), box)
