"""Executable optimality conditions for a (policy, certificate) pair.

A feasible policy rho(s_vec|a) is optimal iff some lam satisfies

    rho(s_vec|a) = rho(s_vec) exp(sum_b lam(s_b, a, b))     (map equation)
    sum_a rho(a) exp(sum_b lam(s_b, a, b)) <= 1             (slack)
    marginals of rho(s_vec|a) equal P(s|a,b)                (marginal)
    rho(s_vec|a) >= 0                                        (nonneg)

Each condition is reported as an absolute residual on probability-scale
quantities.  One tolerance applies to all of them, with scale factor 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .cbox import CBox, CBoxError, InputPrior, sequence_digits
from .dual import UNBOUNDED_BELOW, DualCertificate, DualResult, dual_objective, log_slacks
from .primal import PrimalResult, SimulationPolicy, _marginals, mutual_information, sum_multipliers


@dataclass(frozen=True)
class OptimalityReport:
    residual_map_eq: float
    residual_slack: float
    residual_marginal: float
    residual_nonneg: float
    residual_fixedpoint: float
    tolerance: float

    @property
    def residuals(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k.startswith("residual_")}

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.residuals.values())

    @property
    def worst(self) -> float:
        return max(self.residuals.values())

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["passed"] = self.passed
        return rec


def _check(cert: DualCertificate, box: CBox, prior: InputPrior, num_sequences: int):
    if cert.shape != box.shape:
        raise CBoxError(f"certificate shape {cert.shape} does not match box {box.shape}")
    if len(prior) != box.num_states:
        raise CBoxError("prior length does not match box")
    if num_sequences != box.num_sequences():
        raise CBoxError("policy does not enumerate the box's outcome sequences")


def _exp_lam(cert: DualCertificate, box: CBox) -> np.ndarray:
    """exp(sum_b lam(s_b,a,b)) per (sequence, a); -inf sums map to exactly 0."""
    S, _, M = box.shape
    total = sum_multipliers(cert.lam, sequence_digits(S, M))
    out = np.zeros_like(total)
    finite = np.isfinite(total)
    out[finite] = np.exp(total[finite])
    return out


def check_conditions(policy: SimulationPolicy, cert: DualCertificate, box: CBox,
                     prior: InputPrior | None = None, tol: float = 1e-6) -> OptimalityReport:
    prior = prior or policy.prior
    _check(cert, box, prior, policy.cond.shape[0])
    S = box.num_outcomes
    cond, mix = policy.cond, policy.mix
    weights = _exp_lam(cert, box)
    slack = np.exp(log_slacks(cert, prior))
    return OptimalityReport(
        residual_map_eq=float(np.abs(cond - mix[:, None] * weights).max()),
        residual_slack=float(max(0.0, (slack - 1.0).max())),
        residual_marginal=float(np.abs(_marginals(cond, policy.digits, S) - box.prob).max()),
        residual_nonneg=float(max(0.0, -cond.min())),
        residual_fixedpoint=float(np.abs(mix * (slack - 1.0)).max()),
        tolerance=tol,
    )


def reconstruct_policy(mix, cert: DualCertificate, box: CBox, prior: InputPrior) -> SimulationPolicy:
    """rho(s_vec|a) = rho(s_vec) exp(sum_b lam) from a mixture and a certificate."""
    mix = np.asarray(mix, dtype=float)
    return SimulationPolicy(box.shape, mix[:, None] * _exp_lam(cert, box), prior)


def check_conditions_reduced(mix, cert: DualCertificate, box: CBox, prior: InputPrior,
                             tol: float = 1e-6) -> OptimalityReport:
    """Conditions on the mixture alone, with the conditional table eliminated.

    rho(s_vec) >= 0; the marginals of rho(s_vec) exp(sum lam) equal P;
    slack <= 1; rho(s_vec) * slack = rho(s_vec).  The last one forces the
    mixture to vanish wherever the slack constraint is strict.
    """
    mix = np.asarray(mix, dtype=float)
    _check(cert, box, prior, mix.shape[0])
    S, _, M = box.shape
    rebuilt = mix[:, None] * _exp_lam(cert, box)
    slack = np.exp(log_slacks(cert, prior))
    return OptimalityReport(
        residual_map_eq=0.0,
        residual_slack=float(max(0.0, (slack - 1.0).max())),
        residual_marginal=float(np.abs(_marginals(rebuilt, sequence_digits(S, M), S) - box.prob).max()),
        residual_nonneg=float(max(0.0, -mix.min())),
        residual_fixedpoint=float(np.abs(mix * (slack - 1.0)).max()),
        tolerance=tol,
    )


def soundness_radius(report: OptimalityReport, cert: DualCertificate, box: CBox) -> float:
    """Bound on |I(policy) - dual objective| implied by a passing report.

    Linear in the worst residual r, with a log(1/r) factor on the map term
    (a mass r sitting where rho(s_vec) exp(sum lam) is tiny costs r log(1/r)):

        K A r (1 + log(1/r)) + S A M (1 + max|finite lam|) r
    """
    S, A, M = box.shape
    K = box.num_sequences()
    r = max(report.worst, 1e-300)
    finite = cert.lam[np.isfinite(cert.lam)]
    big = float(np.abs(finite).max()) if finite.size else 0.0
    return K * A * r * (1.0 + max(0.0, math.log(1.0 / r))) + S * A * M * (1.0 + big) * r


def duality_gap(primal: PrimalResult, dual: DualResult, tol: float = 1e-9) -> float:
    """Primal value minus proven dual bound, in nats.

    Negative values beyond ``tol`` indicate an inconsistency and raise.
    """
    if dual.box is not None and dual.box != primal.box:
        raise CBoxError("primal and dual results come from different C-boxes")
    if dual.certificate.shape != primal.box.shape:
        raise CBoxError("primal and dual results have mismatched dimensions")
    gap = primal.value_nats - dual.bound_nats
    if gap < -tol:
        raise RuntimeError(f"negative duality gap {gap:.3e}: weak duality violated")
    return gap


def corollary1_normalize(cert: DualCertificate, box: CBox) -> DualCertificate:
    """Set lam(s,a,b) = -inf wherever P(s|a,b) = 0.

    The objective is unchanged (those terms carry zero weight) and no slack
    can grow, because exp(-inf) = 0 only removes terms from the sums.
    """
    if cert.shape != box.shape:
        raise CBoxError("certificate and box dimensions differ")
    return DualCertificate(np.where(box.prob == 0, -np.inf, cert.lam))


def objective_pair(policy: SimulationPolicy, cert: DualCertificate, box: CBox,
                   prior: InputPrior | None = None) -> tuple[float, float]:
    value = dual_objective(cert, box, prior or policy.prior)
    return mutual_information(policy), (-math.inf if value is UNBOUNDED_BELOW else value)
