"""Dual certificates: multipliers lam(s, a, b) whose feasibility proves a lower bound.

A certificate is feasible when, for every outcome sequence s_vec,

    sum_a rho(a) exp(sum_b lam(s_b, a, b)) <= 1,

and then sum_{s,a,b} P(s|a,b) rho(a) lam(s, a, b) is a lower bound on the
asymptotic communication cost.  Entries may be -inf (exp(-inf) = 0);
the file format spells them as the string "-inf".
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cbox import CBox, CBoxError, InputPrior, SchemaError, check_prior, require_valid, sequence_digits
from .primal import DEFAULT_BUDGET, PrimalResult, check_budget, sum_multipliers

log = logging.getLogger(__name__)

CERT_FORMAT = "ccbounds.certificate"
FEAS_TOL = 1e-9
OPT_TOL = 1e-6


class ExtractionError(RuntimeError):
    """The primal iterate is not stationary enough to read off multipliers."""


class _Unbounded:
    """Objective value of a certificate placing -inf on a positive-probability entry."""

    def __repr__(self):
        return "UNBOUNDED_BELOW"


UNBOUNDED_BELOW = _Unbounded()


@dataclass(frozen=True, eq=False)
class DualCertificate:
    lam: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        if lam.ndim != 3:
            raise CBoxError(f"certificate tensor must have rank 3 (s, a, b), got {lam.ndim}")
        if np.isnan(lam).any():
            raise CBoxError("certificate contains NaN")
        if np.isposinf(lam).any():
            raise CBoxError("certificate contains +inf")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def shape(self):
        return self.lam.shape

    @classmethod
    def zeros(cls, shape) -> "DualCertificate":
        return cls(np.zeros(shape))


def _check_dims(cert: DualCertificate, box: CBox | None, prior: InputPrior):
    if box is not None and cert.shape != box.shape:
        raise CBoxError(f"certificate shape {cert.shape} does not match box {box.shape}")
    if cert.shape[1] != len(prior):
        raise CBoxError("prior length does not match certificate")


def dual_objective(cert: DualCertificate, box: CBox, prior: InputPrior):
    """sum P(s|a,b) rho(a) lam(s,a,b) in nats.

    Terms with P = 0 contribute nothing whatever lam is.  Returns
    ``UNBOUNDED_BELOW`` when a positive-probability entry carries -inf.
    """
    _check_dims(cert, box, prior)
    weight = box.prob * prior.rho_a[None, :, None]
    live = weight > 0
    if np.isneginf(cert.lam[live]).any():
        return UNBOUNDED_BELOW
    return float(np.sum(weight[live] * cert.lam[live]))


def log_slacks(cert: DualCertificate, prior: InputPrior) -> np.ndarray:
    """log sum_a rho(a) exp(sum_b lam(s_b,a,b)) for every sequence (log-sum-exp)."""
    S, _, M = cert.shape
    total = sum_multipliers(cert.lam, sequence_digits(S, M))
    with np.errstate(divide="ignore"):
        w = total + np.log(prior.rho_a)[None, :]
    top = w.max(axis=1)
    out = np.full(top.shape, -np.inf)
    ok = np.isfinite(top)
    out[ok] = top[ok] + np.log(np.exp(w[ok] - top[ok, None]).sum(axis=1))
    return out


def constraint_slack(cert: DualCertificate, prior: InputPrior, sequence) -> float:
    """sum_a rho(a) exp(sum_b lam(s_b,a,b)) for one sequence (index or digit tuple)."""
    _check_dims(cert, None, prior)
    S, A, M = cert.shape
    if np.ndim(sequence) == 0:
        k = int(sequence)
        if not 0 <= k < S**M:
            raise IndexError(f"sequence index {k} out of range")
        digits = [(k // S**b) % S for b in range(M)]
    else:
        digits = [int(s) for s in sequence]
        if len(digits) != M or any(not 0 <= s < S for s in digits):
            raise IndexError(f"invalid sequence {sequence!r}")
    terms = np.array([sum(cert.lam[s, a, b] for b, s in enumerate(digits)) for a in range(A)])
    with np.errstate(divide="ignore"):
        w = terms + np.log(prior.rho_a)
    top = w.max()
    if top == -np.inf:
        return 0.0
    return float(math.exp(top) * np.exp(w - top).sum())


@dataclass(frozen=True, eq=False)
class DualResult:
    certificate: DualCertificate
    value_nats: float
    feasible: bool
    worst_sequence: int
    worst_slack: float
    bound_nats: float
    converged: bool = True
    iterations: int = 0
    box: CBox | None = None

    @property
    def value_bits(self) -> float:
        return self.value_nats / math.log(2)

    @property
    def bound_bits(self) -> float:
        return self.bound_nats / math.log(2)

    def to_record(self, num_outcomes: int | None = None, num_measurements: int | None = None) -> dict:
        rec = {
            "feasible": self.feasible,
            "bound_nats": self.bound_nats,
            "bound_bits": self.bound_bits,
            "objective_nats": self.value_nats,
            "worst_sequence": self.worst_sequence,
            "worst_slack": self.worst_slack,
            "converged": self.converged,
            "iterations": self.iterations,
        }
        if num_outcomes and num_measurements:
            rec["worst_sequence_outcomes"] = [
                (self.worst_sequence // num_outcomes**b) % num_outcomes for b in range(num_measurements)]
        return rec


def certify_lower_bound(cert: DualCertificate, box: CBox, prior: InputPrior,
                        tol: float = FEAS_TOL, *, budget: int = DEFAULT_BUDGET) -> DualResult:
    """Check every sequence constraint and report the proven bound.

    ``bound_nats`` is the objective after the uniform shift lam -> lam - eps
    that brings the largest slack down to 1 (loss eps * M); it is a valid
    lower bound whether or not the raw certificate was feasible.
    """
    _check_dims(cert, box, prior)
    check_budget(box, budget)
    ls = log_slacks(cert, prior)
    worst = int(np.argmax(ls))
    worst_log = float(ls[worst])
    worst_slack = math.exp(worst_log) if worst_log < 700 else math.inf
    value = dual_objective(cert, box, prior)
    feasible = worst_slack <= 1.0 + tol
    if value is UNBOUNDED_BELOW:
        return DualResult(cert, -math.inf, feasible, worst, worst_slack, -math.inf, box=box)
    bound = value - max(worst_log, 0.0)
    return DualResult(cert, value, feasible, worst, worst_slack, bound, box=box)


def shrink_to_feasible(cert: DualCertificate, prior: InputPrior) -> tuple[DualCertificate, float]:
    """Shift all finite entries by -eps so the largest slack is at most 1; returns (cert, eps)."""
    M = cert.shape[2]
    worst = float(log_slacks(cert, prior).max())
    eps = max(worst, 0.0) / M
    return DualCertificate(cert.lam - eps), eps


# -- dual maximization -------------------------------------------------------

def _incidence(box: CBox, prior: InputPrior):
    """Sparse structure of the constraint exponents over the free variables."""
    S, A, M = box.shape
    free = box.prob > 0
    var_index = -np.ones(box.shape, dtype=int)
    var_index[free] = np.arange(free.sum())
    digits = sequence_digits(S, M)
    rows = []  # per sequence: (columns matrix (A', M), log rho)
    for k in range(digits.shape[0]):
        cols, logw = [], []
        for a in range(A):
            idx = [var_index[digits[k, b], a, b] for b in range(M)]
            if min(idx) >= 0 and prior.rho_a[a] > 0:
                cols.append(idx)
                logw.append(math.log(prior.rho_a[a]))
        if cols:
            rows.append((k, np.array(cols), np.array(logw)))
    c = (box.prob * prior.rho_a[None, :, None])[free]
    return free, var_index, rows, c


def _barrier_terms(x, rows, n, need_hessian=True):
    """Constraint values g_i, their gradients, and sum_i (sum_a pi_a B_a B_a^T) / (-g_i)."""
    g = np.empty(len(rows))
    grads = np.zeros((len(rows), n))
    curv = np.zeros((n, n)) if need_hessian else None
    for i, (_, cols, logw) in enumerate(rows):
        z = x[cols].sum(axis=1) + logw
        top = z.max()
        e = np.exp(z - top)
        tot = e.sum()
        g[i] = top + math.log(tot)
        pi = e / tot
        np.add.at(grads[i], cols.ravel(), np.repeat(pi, cols.shape[1]))
        if need_hessian and g[i] < 0:
            for a in range(cols.shape[0]):
                curv[np.ix_(cols[a], cols[a])] += pi[a] / (-g[i])
    return g, grads, curv


def _phi(x, t, c, rows, n):
    g, _, _ = _barrier_terms(x, rows, n, need_hessian=False)
    if np.any(g >= 0):
        return math.inf
    return -t * c @ x - np.log(-g).sum()


def solve_dual(box: CBox, prior: InputPrior | None = None, tol: float = OPT_TOL,
               max_iter: int = 200, *, feas_tol: float = FEAS_TOL,
               budget: int = DEFAULT_BUDGET, mu: float = 8.0) -> DualResult:
    """Maximize the dual objective with a log-barrier Newton method.

    Entries with P(s|a,b) = 0 are fixed at -inf; the rest start at -1,
    which is strictly feasible.  ``max_iter`` caps the number of Newton
    steps per barrier stage.  Stops when the barrier gap m/t drops below
    ``tol / 10``.
    """
    require_valid(box)
    prior = prior or InputPrior.uniform(box.num_states)
    check_prior(box, prior)
    check_budget(box, budget)
    free, var_index, rows, c = _incidence(box, prior)
    n = int(free.sum())
    m = len(rows)
    x = -np.ones(n)
    t = 1.0
    total_steps = 0
    converged = False
    while True:
        for _ in range(max_iter):
            g, grads, curv = _barrier_terms(x, rows, n)
            inv = 1.0 / (-g)
            grad = -t * c + grads.T @ inv
            # Hessian of -log(-g): (hess g) / (-g) + grad g grad g^T / g^2,
            # with hess g = sum_a pi_a B_a B_a^T - grad g grad g^T
            hess = curv + (grads * (inv**2 - inv)[:, None]).T @ grads
            step = -np.linalg.lstsq(hess, grad, rcond=1e-12)[0]
            dec = float(-grad @ step)
            total_steps += 1
            if dec / 2 <= 1e-12:
                break
            s = 1.0
            f0 = _phi(x, t, c, rows, n)
            while s > 1e-14:
                f1 = _phi(x + s * step, t, c, rows, n)
                if f1 <= f0 - 0.25 * s * dec:
                    break
                s *= 0.5
            else:
                break
            x = x + s * step
        if m / t < tol / 10:
            converged = True
            break
        if total_steps > 50 * max_iter:
            break
        t *= mu
    lam = np.full(box.shape, -np.inf)
    lam[free] = x
    cert = DualCertificate(lam)
    res = certify_lower_bound(cert, box, prior, feas_tol, budget=budget)
    if not res.feasible:
        cert, _ = shrink_to_feasible(cert, prior)
        res = certify_lower_bound(cert, box, prior, feas_tol, budget=budget)
    if not converged:
        log.warning("dual barrier method stopped before reaching tolerance %g", tol)
    return DualResult(res.certificate, res.value_nats, res.feasible, res.worst_sequence,
                      res.worst_slack, res.bound_nats, converged, total_steps, box)


# -- certificate extraction ---------------------------------------------------

def extract_certificate(primal: PrimalResult, *, residual_tol: float = 1e-6,
                        support_tol: float = 1e-6) -> DualCertificate:
    """Read multipliers off a solved primal through rho(s_vec|a) = rho(s_vec) exp(sum_b lam).

    Per input a, solves the log equations over the sequences carrying mass by
    least squares; entries with P(s|a,b) = 0 become -inf.  The equations
    leave a null space free, and sequences off the support still constrain
    it through the slack inequality.  The solution closest to the primal
    solver's own multipliers is taken, since those sit at the iteration's
    fixed point where every slack is at most 1.
    """
    box = primal.box
    policy = primal.policy
    S, A, M = box.shape
    digits = sequence_digits(S, M)
    cond, mix = policy.cond, policy.mix
    lam = np.full(box.shape, -np.inf)
    worst = 0.0
    for a in range(A):
        free = box.prob[:, a, :] > 0
        col = -np.ones((S, M), dtype=int)
        col[free] = np.arange(free.sum())
        support = (cond[:, a] > support_tol) & (mix > support_tol)
        ks = np.flatnonzero(support)
        design = np.zeros((ks.size, int(free.sum())))
        for r, k in enumerate(ks):
            for b in range(M):
                j = col[digits[k, b], b]
                if j < 0:
                    raise ExtractionError(f"sequence {k} carries mass for a={a} on a zero-probability outcome")
                design[r, j] += 1.0
        rhs = np.log(cond[ks, a]) - np.log(mix[ks])
        ref = np.zeros(int(free.sum()))
        if primal.multipliers is not None:
            anchor = primal.multipliers[:, a, :][free]
            ref = np.where(np.isfinite(anchor), anchor, 0.0)
        sol = ref + np.linalg.lstsq(design, rhs - design @ ref, rcond=None)[0]
        if ks.size:
            worst = max(worst, float(np.abs(design @ sol - rhs).max()))
        block = np.full((S, M), -np.inf)
        block[free] = sol
        lam[:, a, :] = block
    if worst > residual_tol:
        raise ExtractionError(f"map-equation residual {worst:.3e} exceeds {residual_tol:.1e}; "
                              "primal is not at an optimum")
    return DualCertificate(lam)


# -- files -------------------------------------------------------------------

def _encode(v: float):
    return "-inf" if v == -math.inf else float(v)


def certificate_to_dict(cert: DualCertificate) -> dict:
    S, A, M = cert.shape
    return {
        "format": CERT_FORMAT,
        "version": 1,
        "num_outcomes": S,
        "num_states": A,
        "num_measurements": M,
        "lambda": [[[_encode(v) for v in row] for row in plane] for plane in cert.lam.tolist()],
    }


def certificate_from_dict(doc: dict) -> DualCertificate:
    for key in ("num_outcomes", "num_states", "num_measurements", "lambda"):
        if key not in doc:
            raise SchemaError(key, "missing required field")

    def decode(v, path):
        if v == "-inf":
            return -math.inf
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(path, f"expected a number or \"-inf\", got {v!r}")
        return float(v)

    raw = doc["lambda"]
    try:
        lam = np.array([[[decode(v, f"lambda[{s}][{a}][{b}]") for b, v in enumerate(row)]
                         for a, row in enumerate(plane)] for s, plane in enumerate(raw)], dtype=float)
    except TypeError:
        raise SchemaError("lambda", "expected nested arrays indexed (s, a, b)") from None
    dims = (doc["num_outcomes"], doc["num_states"], doc["num_measurements"])
    if lam.ndim != 3 or lam.shape != dims:
        raise SchemaError("lambda", f"dimension error: shape {lam.shape} does not match declared {dims}")
    return DualCertificate(lam)


def save_certificate(cert: DualCertificate, path) -> None:
    Path(path).write_text(json.dumps(certificate_to_dict(cert)) + "\n")


def load_certificate(path) -> DualCertificate:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"malformed JSON: {exc}") from None
    return certificate_from_dict(doc)
