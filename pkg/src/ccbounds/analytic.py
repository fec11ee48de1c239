"""Analytic lower bounds for a noiseless N-level channel followed by a rank-1 two-outcome test.

The dual multipliers are restricted to lam(s, psi, phi) = alpha_s |<phi|psi>|^2 + beta_s.
With alpha = alpha_1 - alpha_2 and beta = beta_1 - beta_2 the constraints
reduce to F(theta, alpha, beta) >= alpha_2 / N + beta_2 for every cap
aperture theta, and the bound is

    I = beta / N + 2 alpha / (N (N + 1)) + min_theta F(theta, alpha, beta).

Three solution branches are provided: the closed form obtained by dropping
the incomplete gamma term (N <= 4), its Newton refinement (N <= 4), and the
double-minimum solution for N >= 5 where F vanishes both at theta = 0 and at
an interior theta_m.  All logs are natural; bits appear only in outputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.optimize import brentq

from .special import lambert_w0, ln_gamma, log_reg_gamma_p

LN2 = math.log(2.0)
HALF_PI = 0.5 * math.pi

SMALL_N_APPROX = "small_N_approx"
SMALL_N_EXACT = "small_N_exact"
LARGE_N = "large_N"

CONJECTURE_FLAG = ("relies on the stationarity hypothesis for the maximal constraint set "
                   "and the symmetric-cap hypothesis")

CSV_COLUMNS = ("N", "branch", "alpha", "beta", "theta_m", "bound_nats", "bound_bits",
               "asymptotic_bits", "conjectured_bits", "error")


class BranchError(ValueError):
    """Requested dimension is outside the branch's range of validity."""


class RootFindingError(RuntimeError):
    pass


class GlobalMinimumError(RuntimeError):
    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


@dataclass(frozen=True)
class TwoOutcomeSolution:
    N: int
    branch: str
    alpha: float
    beta: float
    theta_m: float
    bound_nats: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def bound_bits(self) -> float:
        return self.bound_nats / LN2

    def in_significant_region(self, slack: float = 1e-12) -> bool:
        lo = -2 * self.alpha / (self.N + 1)
        hi = -self.alpha / (self.N + 1)
        scale = slack * max(1.0, abs(self.alpha))
        return self.alpha > 0 and lo - scale <= self.beta <= hi + scale

    def to_row(self) -> dict:
        return {
            "N": self.N, "branch": self.branch, "alpha": self.alpha, "beta": self.beta,
            "theta_m": self.theta_m, "bound_nats": self.bound_nats, "bound_bits": self.bound_bits,
        }


# -- landscape ---------------------------------------------------------------

def _check_N(N):
    if int(N) != N or N < 2:
        raise ValueError(f"dimension N must be an integer >= 2, got {N}")
    return int(N)


def cap_volume(N: int, theta):
    """Normalized volume sin(theta)^(2N-2) of the cap of aperture 2 theta."""
    N = _check_N(N)
    th = np.asarray(theta, dtype=float)
    if np.any((th < 0) | (th > HALF_PI + 1e-15)):
        raise ValueError("theta must lie in [0, pi/2]")
    out = np.sin(th) ** (2 * N - 2)
    return float(out) if out.ndim == 0 else out


def log_moment(N: int, y):
    """log[Gamma(N) P(N-1, y) / y^(N-1)] = log E[exp(y (x - 1))] for x ~ Beta(1, N-1).

    x is the overlap |<psi|chi>|^2 of a Haar state with a fixed axis, so this
    is the psi integral of the cap constraint shifted by -y; it tends to 0 as y -> 0.
    """
    y = np.asarray(y, dtype=float)
    out = np.zeros(y.shape)
    pos = y > 0
    if pos.any():
        yp = y[pos]
        out[pos] = ln_gamma(N) + log_reg_gamma_p(N - 1, yp) - (N - 1) * np.log(yp)
    return float(out) if out.ndim == 0 else out


def log_ratio_r(N: int, y):
    """log of y^(N-1) e^(-y) / (Gamma(N) [1 - Q(N-1, y)]) = -y - log_moment(N, y)."""
    y = np.asarray(y, dtype=float)
    out = -y - log_moment(N, y)
    return float(out) if np.ndim(out) == 0 else out


def f_theta(N: int, theta, alpha: float, beta: float):
    """Cap-constraint function F(theta, alpha, beta); F(0) = 0."""
    N = _check_N(N)
    th = np.asarray(theta, dtype=float)
    s2 = np.sin(th) ** 2
    c2 = np.cos(th) ** 2
    S = s2 ** (N - 1)
    y = alpha * S * c2
    out = -S * (beta + alpha * (s2 / N + c2)) - log_moment(N, y)
    return float(out) if np.ndim(out) == 0 else out


def _dlog_moment(N, y):
    """d/dy log_moment = (N-1) (R - 1) / y, with the y -> 0 limit 1/N."""
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, 1.0 / N)
    pos = y > 1e-8
    if pos.any():
        yp = y[pos]
        out[pos] = (N - 1) * np.expm1(log_ratio_r(N, yp)) / yp
    small = (~pos) & (y > 0)
    out[small] = 1.0 / N + y[small] * (2.0 / (N * (N + 1)) - 1.0 / N**2)
    return out


def f_theta_derivative(N: int, theta, alpha: float, beta: float):
    """dF/dtheta."""
    N = _check_N(N)
    th = np.asarray(theta, dtype=float)
    s, c = np.sin(th), np.cos(th)
    s2, c2 = s * s, c * c
    S = s2 ** (N - 1)
    y = alpha * S * c2
    dl = _dlog_moment(N, y)
    # dS = S (2N-2) c/s ; d(s2/N + c2) = 2sc (1/N - 1) ; d(S c2) = S c [(2N-2) c2/s - 2s]
    with np.errstate(divide="ignore", invalid="ignore"):
        dS = (2 * N - 2) * s ** (2 * N - 3) * c
    dS = np.where(th == 0, 0.0 if N > 2 else 0.0, dS)
    dy = alpha * (dS * c2 - 2 * S * s * c)
    out = -dS * (beta + alpha * (s2 / N + c2)) - S * alpha * 2 * s * c * (1.0 / N - 1.0) - dl * dy
    return float(out) if np.ndim(out) == 0 else out


def theta_grid(points: int = 2000) -> np.ndarray:
    return np.linspace(0.0, HALF_PI, points)


def scan_minimum(N, alpha, beta, points=2000):
    grid = theta_grid(points)
    vals = f_theta(N, grid, alpha, beta)
    i = int(np.argmin(vals))
    return float(grid[i]), float(vals[i])


def objective(N: int, alpha: float, beta: float, min_f: float) -> float:
    """beta/N + 2 alpha/(N(N+1)) + alpha_2/N + beta_2 with alpha_2/N + beta_2 = min_f."""
    return beta / N + 2.0 * alpha / (N * (N + 1)) + min_f


def _finish(N, branch, alpha, beta, theta_m, bound, extra, scan_points=2000):
    th_min, f_min = scan_minimum(N, alpha, beta, scan_points)
    diag = {"scan_theta_min": th_min, "scan_f_min": f_min,
            "f_at_theta_m": f_theta(N, theta_m, alpha, beta)}
    diag.update(extra)
    return TwoOutcomeSolution(N, branch, float(alpha), float(beta), float(theta_m), float(bound), diag)


# -- N <= 4 ------------------------------------------------------------------

def _small_n_geometry(N):
    s2 = N ** (1.0 / (1 - N))  # S(theta_m) = 1/N
    c2 = 1.0 - s2
    return s2, c2, math.asin(math.sqrt(s2))


def _small_n_check(N):
    N = _check_N(N)
    if N > 4:
        raise BranchError(f"the small-N branch holds only for N in {{2, 3, 4}}, got N={N}")
    return N


def beta_from_alpha(N, alpha, theta):
    """beta = alpha (tan^2 theta - 2N) / (N (N + 1)), from stationarity of F in theta."""
    return alpha * (math.tan(theta) ** 2 - 2 * N) / (N * (N + 1))


def bound_smallN_approx(N: int) -> TwoOutcomeSolution:
    """Closed-form bound obtained by neglecting the incomplete gamma term."""
    N = _small_n_check(N)
    r = N ** (1.0 / (1 - N))
    alpha = N**2 * (N + 1) / (N - (N + 1) * r)
    s2, c2, theta_m = _small_n_geometry(N)
    beta = ((1.0 / (1.0 - r) - 1.0) / N - 2.0) * alpha / (N + 1)
    inner = N * (N + 1) * (r - 1.0) / math.e / (((1 + N) * r - N) * math.exp(ln_gamma(N) / (N - 1)))
    bound = (N - 1) * math.log(inner)
    return _finish(N, SMALL_N_APPROX, alpha, beta, theta_m, bound, {})


def alpha_equation(N: int, alpha: float) -> float:
    """Residual of the implicit alpha equation at S(theta_m) = 1/N.

    (N^(N/(1-N)) - 1/(N+1)) alpha/N + 1 - y^(N-1) e^(-y) / (Gamma(N)[1 - Q(N-1, y)])
    with y = alpha cos^2(theta_m) / N.
    """
    N = _small_n_check(N)
    s2, c2, _ = _small_n_geometry(N)
    k = (N ** (N / (1.0 - N)) - 1.0 / (N + 1)) / N
    y = alpha * c2 / N
    return 1.0 + k * alpha - math.exp(log_ratio_r(N, y))


def refine_alpha_newton(N: int, tol: float = 1e-13, max_iter: int = 100) -> TwoOutcomeSolution:
    """Solve the implicit alpha equation by safeguarded Newton from the closed-form alpha."""
    N = _small_n_check(N)
    approx = bound_smallN_approx(N)
    s2, c2, theta_m = _small_n_geometry(N)
    k = (N ** (N / (1.0 - N)) - 1.0 / (N + 1)) / N

    def phi(a):
        return alpha_equation(N, a)

    def dphi(a):
        y = a * c2 / N
        R = math.exp(log_ratio_r(N, y))
        dlogR = (N - 1) / y - 1.0 - (N - 1) * R / y
        return k - R * dlogR * c2 / N

    # phi > 0 just above 0, phi(alpha_approx) = -R < 0
    hi = approx.alpha
    lo = hi * 1e-3
    if not (phi(lo) > 0 > phi(hi)):
        raise RootFindingError(f"alpha equation not bracketed for N={N}")
    a = hi
    iters = 0
    for iters in range(1, max_iter + 1):
        f = phi(a)
        if f > 0:
            lo = a
        else:
            hi = a
        d = dphi(a)
        step = f / d if d != 0 else math.inf
        cand = a - step
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        if abs(cand - a) <= tol * abs(a):
            a = cand
            break
        a = cand
    else:
        raise RootFindingError(f"Newton iteration for alpha did not converge (N={N})")
    beta = beta_from_alpha(N, a, theta_m)
    f_m = f_theta(N, theta_m, a, beta)
    bound = objective(N, a, beta, min(f_m, 0.0))
    return _finish(N, SMALL_N_EXACT, a, beta, theta_m, bound,
                   {"newton_iterations": iters, "alpha_residual": phi(a), "alpha_approx": approx.alpha})


# -- N >= 5 ------------------------------------------------------------------

def _large_n_parts(N, theta):
    """Closed-form y = alpha S cos^2 and the residual of the remaining theta equation."""
    th = np.asarray(theta, dtype=float)
    c2 = np.cos(th) ** 2
    t = np.tan(th) ** 2
    g = t + 2.0  # 1 + 1/cos^2
    w = lambert_w0(-g * np.exp(-g))
    v = -w / g  # nontrivial root of log v = g (v - 1)
    y = -N * (N + 1) * (g + w) * c2 / ((1 + c2) * (t - N))
    resid = log_ratio_r(N, y) - np.log(v)
    return y, resid


def alpha_closed_form(N: int, theta: float) -> float:
    """alpha = -N(N+1)[g + W0(-g e^-g)] / (S (1 + cos^2) (tan^2 - N)), g = 1 + cos^-2."""
    c2 = math.cos(theta) ** 2
    t = math.tan(theta) ** 2
    g = t + 2.0
    w = lambert_w0(-g * math.exp(-g))
    log_s = (2 * N - 2) * math.log(math.sin(theta))
    return -N * (N + 1) * (g + w) / (math.exp(log_s) * (1 + c2) * (t - N))


def theta_equation(N: int, theta):
    """Residual of the theta_m equation once alpha and beta are eliminated."""
    out = _large_n_parts(N, theta)[1]
    return float(out) if np.ndim(out) == 0 else out


def bound_largeN(N: int, tol: float = 1e-9, scan: int = 4000,
                 verify_points: int = 2000) -> TwoOutcomeSolution:
    """Solution for N >= 5 where F has two zero minima, at 0 and at theta_m."""
    N = _check_N(N)
    if N < 5:
        raise BranchError(f"the large-N branch requires N >= 5, got N={N}")
    hi = min(HALF_PI - 0.01, math.atan(math.sqrt(N)) - 1e-9)  # alpha > 0 needs tan^2 < N
    grid = np.linspace(0.01, hi, scan)
    vals = theta_equation(N, grid)
    ok = np.isfinite(vals)
    brackets = [(grid[i], grid[i + 1]) for i in range(scan - 1)
                if ok[i] and ok[i + 1] and np.sign(vals[i]) != np.sign(vals[i + 1])]
    if not brackets:
        raise RootFindingError(f"no root of the theta equation bracketed in (0.01, {hi:.4f}) for N={N}")

    candidates = []
    failure = None
    vgrid = theta_grid(verify_points)
    for lo_th, hi_th in brackets:
        th = brentq(lambda x: theta_equation(N, x), lo_th, hi_th, xtol=1e-15, rtol=1e-15, maxiter=200)
        alpha = alpha_closed_form(N, th)
        if not alpha > 0:
            continue
        beta = beta_from_alpha(N, alpha, th)
        f_m = f_theta(N, th, alpha, beta)
        df_m = f_theta_derivative(N, th, alpha, beta)
        fv = f_theta(N, vgrid, alpha, beta)
        j = int(np.argmin(fv))
        if fv[j] < -tol * max(1.0, alpha / N):
            failure = GlobalMinimumError(
                f"theta_m={th:.6f} is not a global minimum of F for N={N}: F({vgrid[j]:.6f}) = {fv[j]:.3e}",
                float(vgrid[j]))
            continue
        bound = objective(N, alpha, beta, min(f_m, 0.0))
        candidates.append((bound, th, alpha, beta, f_m, df_m))
    if not candidates:
        raise failure or RootFindingError(f"no admissible root for N={N}")
    bound, th, alpha, beta, f_m, df_m = max(candidates)
    return _finish(N, LARGE_N, alpha, beta, th, bound,
                   {"f_at_theta_m": f_m, "df_at_theta_m": df_m, "roots_found": len(brackets)},
                   verify_points)


def solve(N: int, exact: bool = True) -> TwoOutcomeSolution:
    """Best available bound for dimension N."""
    N = _check_N(N)
    if N <= 4:
        return refine_alpha_newton(N) if exact else bound_smallN_approx(N)
    return bound_largeN(N)


# -- asymptotics and the conjectured bound ------------------------------------

@dataclass(frozen=True)
class AsymptoticConstants:
    z1: float
    residual: float
    limit_bits: float


def _z_equation(z):
    return 1.0 - math.e / z - z / math.e + math.log(z)


def solve_z1() -> AsymptoticConstants:
    """Second root (the first is z = e) of 1 - e/z - z/e + log z = 0."""
    z = brentq(_z_equation, 3.0, 20.0, xtol=1e-15, rtol=1e-15, maxiter=200)
    limit = math.exp(math.e / (z - math.e)) * (z - math.e) ** 2 / (z * LN2)
    return AsymptoticConstants(z, abs(_z_equation(z)), limit)


def asymptotic_bound(N: int, z1: float | None = None) -> float:
    """Large-N approximation of the bound, in nats (evaluated in log space)."""
    N = _check_N(N)
    z = solve_z1().z1 if z1 is None else z1
    e = math.e
    log_val = (2 * math.log(abs(N * (e - z) + z)) - math.log(N) - math.log(z)
               - math.log(N * e + z) - N * math.log1p(z / (N * (e - z))))
    return math.exp(log_val)


@dataclass(frozen=True)
class ConjecturedBound:
    N: int
    bound_nats: float
    half_n_log_n_nats: float
    qubits: int | None
    qubit_identity_bits: float | None
    conjecture_dependent: bool = True
    flag: str = CONJECTURE_FLAG

    @property
    def bound_bits(self) -> float:
        return self.bound_nats / LN2

    @property
    def half_n_log_n_bits(self) -> float:
        return self.half_n_log_n_nats / LN2


def conjectured_bound(N: int) -> ConjecturedBound:
    """-(N-1) log(1 - N^(1/(1-N))), valid only under two unproven hypotheses."""
    N = _check_N(N)
    x = math.log(N) / (N - 1)
    value = -(N - 1) * math.log(-math.expm1(-x))
    n = N.bit_length() - 1
    qubits = n if (1 << n) == N else None
    ident = n * 2.0 ** (n - 1) if qubits is not None else None
    return ConjecturedBound(N, value, 0.5 * N * math.log(N), qubits, ident)


def conjectured_bits_array(N: np.ndarray) -> np.ndarray:
    N = np.asarray(N, dtype=float)
    x = np.log(N) / (N - 1)
    return -(N - 1) * np.log2(-np.expm1(-x))


def sandwich_upper(c_asym_bits: float) -> float:
    """Upper bound on the one-shot cost from the asymptotic one, both in bits."""
    if c_asym_bits < 0:
        raise ValueError("asymptotic communication cost must be nonnegative")
    return c_asym_bits + 2 * math.log2(c_asym_bits + 1) + 2 * math.log2(math.e)


# -- sweeps -------------------------------------------------------------------

def sweep_row(N: int) -> dict:
    z1 = solve_z1().z1
    row = {k: "" for k in CSV_COLUMNS}
    row["N"] = N
    try:
        sol = solve(N, exact=True)
        row.update(sol.to_row())
    except Exception as exc:  # noqa: BLE001 - recorded in the row, sweep continues
        row["branch"] = SMALL_N_EXACT if N <= 4 else LARGE_N
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["asymptotic_bits"] = asymptotic_bound(N, z1) / LN2
    row["conjectured_bits"] = conjectured_bound(N).bound_bits
    return row


def sweep(N_from: int, N_to: int, workers: int = 1) -> list[dict]:
    if N_from < 2 or N_from > N_to:
        raise ValueError(f"invalid range {N_from}..{N_to}: need 2 <= N_from <= N_to")
    Ns = range(N_from, N_to + 1)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(sweep_row, Ns))
    return [sweep_row(N) for N in Ns]


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return v


def write_csv(rows: Iterable[dict], fh, header_lines: Iterable[str] = ()) -> None:
    for line in header_lines:
        fh.write(f"# {line}\n")
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k, "")) for k in CSV_COLUMNS})
