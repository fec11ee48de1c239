"""Minimum mutual information over simulation policies.

A simulation policy rho(s_vec|a) assigns a joint distribution over outcome
sequences (one outcome for every measurement) to each input a, such that
its b-th marginal reproduces P(s|a,b).  The smallest mutual information
between a and s_vec over such policies is the asymptotic communication
cost of the C-box.

The solver alternates between the mixture rho(s_vec) and an I-projection of
each row onto the marginal constraints.  The projection has the form
rho(s_vec|a) = rho(s_vec) exp(sum_b lam(s_b, a, b)); the multipliers lam
are fitted by iterative proportional fitting and carried across outer
iterations, so every iterate comes with a dual certificate.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cbox import (
    CBox,
    CBoxError,
    InputPrior,
    SchemaError,
    check_prior,
    require_valid,
    sequence_digits,
)

log = logging.getLogger(__name__)

ZERO = 1e-300
DEFAULT_BUDGET = 20_000_000
POLICY_FORMAT = "ccbounds.policy"


class BudgetError(CBoxError):
    """S**M * A exceeds the enumeration budget."""


def check_budget(box: CBox, budget: int = DEFAULT_BUDGET) -> None:
    size = box.num_sequences() * box.num_states
    if size > budget:
        raise BudgetError(f"S^M * A = {size} exceeds the memory budget of {budget} entries")


@dataclass(frozen=True, eq=False)
class SimulationPolicy:
    """Conditional table cond[k, a] = rho(sequence k | a) plus its prior-weighted mixture."""

    dims: tuple[int, int, int]
    cond: np.ndarray
    prior: InputPrior
    mix: np.ndarray = field(init=False)

    def __post_init__(self):
        S, A, M = self.dims
        cond = np.array(self.cond, dtype=float)
        if cond.shape != (S**M, A):
            raise CBoxError(f"policy table has shape {cond.shape}, expected {(S**M, A)}")
        if len(self.prior) != A:
            raise CBoxError("prior length does not match number of states")
        cond.setflags(write=False)
        mix = cond @ self.prior.rho_a
        mix.setflags(write=False)
        object.__setattr__(self, "cond", cond)
        object.__setattr__(self, "mix", mix)

    @property
    def digits(self) -> np.ndarray:
        S, _, M = self.dims
        return sequence_digits(S, M)


def mutual_information(policy: SimulationPolicy) -> float:
    """I(a; s_vec) in nats, with 0 log 0 = 0."""
    cond, mix, rho = policy.cond, policy.mix, policy.prior.rho_a
    joint = cond * rho[None, :]
    live = joint > ZERO
    if np.any(live & (mix[:, None] <= 0)):
        raise RuntimeError("mixture vanishes on a sequence carrying probability")
    ratio = np.ones_like(cond)
    ratio[live] = cond[live] / np.broadcast_to(mix[:, None], cond.shape)[live]
    return float(np.sum(joint[live] * np.log(ratio[live])))


def _marginals(cond: np.ndarray, digits: np.ndarray, S: int) -> np.ndarray:
    """All marginals at once, shape (S, A, M)."""
    K, A = cond.shape
    M = digits.shape[1]
    out = np.zeros((S, A, M))
    for b in range(M):
        for s in range(S):
            out[s, :, b] = cond[digits[:, b] == s].sum(axis=0)
    return out


def marginal(policy: SimulationPolicy, b: int) -> np.ndarray:
    """Marginal of the b-th outcome, indexed (s, a)."""
    S, _, M = policy.dims
    if not 0 <= b < M:
        raise IndexError(f"measurement index {b} out of range for M={M}")
    digits = policy.digits
    return np.stack([policy.cond[digits[:, b] == s].sum(axis=0) for s in range(S)])


def constraint_violation(policy: SimulationPolicy, box: CBox) -> float:
    return float(np.abs(_marginals(policy.cond, policy.digits, box.num_outcomes) - box.prob).max())


def product_policy(box: CBox, prior: InputPrior) -> SimulationPolicy:
    """rho(s_vec|a) = prod_b P(s_b|a,b); feasible by construction."""
    require_valid(box)
    check_prior(box, prior)
    S, A, M = box.shape
    digits = sequence_digits(S, M)
    cond = np.ones((S**M, A))
    for b in range(M):
        cond *= box.prob[digits[:, b], :, b]
    return SimulationPolicy(box.shape, cond, prior)


@dataclass(frozen=True, eq=False)
class PrimalResult:
    box: CBox
    policy: SimulationPolicy
    value_nats: float
    iterations: int
    max_constraint_violation: float
    converged: bool
    multipliers: np.ndarray
    dual_value: float
    history: tuple = ()

    @property
    def value_bits(self) -> float:
        return self.value_nats / np.log(2)

    @property
    def gap(self) -> float:
        return self.value_nats - self.dual_value

    def to_record(self) -> dict:
        return {
            "value_nats": self.value_nats,
            "value_bits": self.value_bits,
            "iterations": self.iterations,
            "max_constraint_violation": self.max_constraint_violation,
            "converged": self.converged,
            "certified_lower_nats": self.dual_value,
        }


def sum_multipliers(lam: np.ndarray, digits: np.ndarray) -> np.ndarray:
    """sum_b lam(s_b, a, b) for every sequence, shape (K, A); -inf entries propagate."""
    K, M = digits.shape
    total = np.zeros((K, lam.shape[1]))
    for b in range(M):
        total = total + lam[digits[:, b], :, b]
    return total


def _log_slack(lam_sum: np.ndarray, rho: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        w = lam_sum + np.log(rho)[None, :]
    top = w.max(axis=1)
    finite = np.isfinite(top)
    out = np.full(top.shape, -np.inf)
    out[finite] = top[finite] + np.log(np.exp(w[finite] - top[finite, None]).sum(axis=1))
    return out


def _multiplier_bound(lam: np.ndarray, box: CBox, rho: np.ndarray, digits: np.ndarray) -> float:
    """Dual objective of lam after the uniform shift restoring sup-slack <= 1."""
    support = box.prob > 0
    obj = float(np.sum((box.prob * rho[None, :, None])[support] * lam[support]))
    excess = max(float(_log_slack(sum_multipliers(lam, digits), rho).max()), 0.0)
    return obj - excess


def _ipf(q, lam, box, digits, tol, max_sweeps, damping):
    """Fit multipliers so that q * exp(sum lam) has the box marginals."""
    S, A, M = box.shape
    P = box.prob
    pos = P > 0
    with np.errstate(divide="ignore"):
        log_q = np.log(q)
    masks = [[digits[:, b] == s for s in range(S)] for b in range(M)]
    for sweep in range(1, max_sweeps + 1):
        for b in range(M):
            cond = np.exp(log_q[:, None] + sum_multipliers(lam, digits))
            marg = np.stack([cond[masks[b][s]].sum(axis=0) for s in range(S)])
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.log(P[:, :, b]) - np.log(marg)
            ok = pos[:, :, b] & (marg > 0)
            lam[:, :, b] = np.where(ok, lam[:, :, b] + damping * step, lam[:, :, b])
        cond = np.exp(log_q[:, None] + sum_multipliers(lam, digits))
        viol = np.abs(_marginals(cond, digits, S) - P).max()
        if viol <= tol:
            break
    return cond, viol, sweep


def solve_primal(box: CBox, prior: InputPrior | None = None, tol: float = 1e-10,
                 max_iter: int = 20_000, *, budget: int = DEFAULT_BUDGET,
                 inner_tol: float = 1e-13, inner_max: int = 5_000,
                 damping: float = 1.0, patience: int = 3) -> PrimalResult:
    """Minimize I(a; s_vec) over feasible simulation policies.

    Stops once the relative objective change and the constraint violation
    both stay below ``tol`` for ``patience`` consecutive outer iterations and
    the multiplier certificate closes the gap to within ``tol``.
    """
    require_valid(box)
    prior = prior or InputPrior.uniform(box.num_states)
    check_prior(box, prior)
    check_budget(box, budget)
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")

    S, A, M = box.shape
    rho = prior.rho_a
    digits = sequence_digits(S, M)
    lam = np.where(box.prob > 0, 0.0, -np.inf)

    policy = product_policy(box, prior)
    value = mutual_information(policy)
    history = [value]
    streak = 0
    converged = False
    viol = constraint_violation(policy, box)
    dual_value = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        q = policy.mix
        cond, inner_viol, _ = _ipf(q, lam, box, digits, inner_tol, inner_max, damping)
        cond[cond < ZERO] = 0.0
        candidate = SimulationPolicy(box.shape, cond, prior)
        new_value = mutual_information(candidate)
        new_viol = constraint_violation(candidate, box)
        if new_value > value + 1e-12 and new_viol <= viol:
            log.debug("objective increased by %.3e at iteration %d", new_value - value, it)
        change = abs(value - new_value) / max(abs(new_value), 1.0)
        policy, value, viol = candidate, new_value, new_viol
        history.append(value)
        dual_value = _multiplier_bound(lam, box, rho, digits)
        if change < tol and viol < tol and value - dual_value <= tol:
            streak += 1
            if streak >= patience:
                converged = True
                break
        else:
            streak = 0
    if not converged:
        log.warning("primal solver stopped after %d iterations without converging", it)
    return PrimalResult(box, policy, max(value, 0.0), it, viol, converged, lam.copy(),
                        dual_value, tuple(history))


# -- files -------------------------------------------------------------------

def policy_to_dict(policy: SimulationPolicy) -> dict:
    S, A, M = policy.dims
    return {
        "format": POLICY_FORMAT,
        "version": 1,
        "num_outcomes": S,
        "num_states": A,
        "num_measurements": M,
        "sequence_encoding": "index = sum_b s_b * num_outcomes**b",
        "prior": policy.prior.rho_a.tolist(),
        "conditional": policy.cond.tolist(),
    }


def policy_from_dict(doc: dict) -> SimulationPolicy:
    try:
        dims = tuple(int(doc[k]) for k in ("num_outcomes", "num_states", "num_measurements"))
        prior = InputPrior(np.array(doc["prior"], dtype=float))
        cond = np.array(doc["conditional"], dtype=float)
    except KeyError as exc:
        raise SchemaError(exc.args[0], "missing required field") from None
    if cond.ndim != 2:
        raise SchemaError("conditional", f"dimension error: expected rank 2, got {cond.ndim}")
    return SimulationPolicy(dims, cond, prior)


def save_policy(policy: SimulationPolicy, path) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(policy)) + "\n")


def load_policy(path) -> SimulationPolicy:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"malformed JSON: {exc}") from None
    return policy_from_dict(doc)
