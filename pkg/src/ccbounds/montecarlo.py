"""Monte Carlo checks of the Haar-measure identities behind the analytic bounds.

Haar-uniform states are normalized standard complex Gaussian vectors.
Randomness is counter based: batch number k of a sampler seeded with s is
drawn from a Philox stream keyed by (s, k), so a report is reproducible
bit for bit and parallel batches never overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import analytic
from .analytic import HALF_PI, LN2, cap_volume, f_theta

CHUNK = 100_000
Z_BAND = 5.0


class InsufficientSamplesError(ValueError):
    """The estimator would see too few accepted samples to be meaningful."""


def _generator(seed: int, counter: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(counter,))
    return np.random.Generator(np.random.Philox(ss))


def haar_states(rng: np.random.Generator, n: int, N: int) -> np.ndarray:
    z = rng.standard_normal((n, N)) + 1j * rng.standard_normal((n, N))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class HaarSampler:
    """Reproducible stream of Haar-random unit vectors in C^N."""

    def __init__(self, dimension: int, seed: int = 0, counter: int = 0):
        if dimension < 2:
            raise ValueError("dimension must be at least 2")
        self.dimension = int(dimension)
        self.seed = int(seed)
        self.counter = int(counter)

    def batch(self, n: int) -> np.ndarray:
        out = haar_states(_generator(self.seed, self.counter), n, self.dimension)
        self.counter += 1
        return out

    def sample_state(self) -> np.ndarray:
        return self.batch(1)[0]

    def batches(self, total: int, chunk: int = CHUNK):
        left = total
        while left > 0:
            n = min(chunk, left)
            yield self.batch(n)
            left -= n


@dataclass
class _Moments:
    """Running sums for a mean and its standard error."""

    n: int = 0
    s1: float = 0.0
    s2: float = 0.0

    def add(self, x: np.ndarray):
        self.n += x.size
        self.s1 += float(x.sum())
        self.s2 += float((x * x).sum())

    @property
    def mean(self) -> float:
        return self.s1 / self.n

    @property
    def stderr(self) -> float:
        var = max(self.s2 / self.n - self.mean**2, 0.0) * self.n / max(self.n - 1, 1)
        return math.sqrt(var / self.n)


@dataclass(frozen=True)
class Estimate:
    name: str
    mean: float
    stderr: float
    target: float

    @property
    def z(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == self.target else math.inf
        return (self.mean - self.target) / self.stderr

    @property
    def passed(self) -> bool:
        return abs(self.z) <= Z_BAND

    def to_record(self) -> dict:
        return {"name": self.name, "mean": self.mean, "stderr": self.stderr,
                "target": self.target, "z": self.z, "passed": self.passed}


@dataclass(frozen=True)
class MCReport:
    check: str
    N: int
    samples: int
    seed: int
    estimates: tuple
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.estimates)

    def to_record(self) -> dict:
        return {"check": self.check, "N": self.N, "samples": self.samples, "seed": self.seed,
                "passed": self.passed, "estimates": [e.to_record() for e in self.estimates],
                **self.extra}


def moment_checks(N: int, samples: int = 1_000_000, seed: int = 0) -> MCReport:
    """Mean of |<phi|psi>|^2 and |<phi|psi>|^4 over Haar phi, against 1/N and 2/(N(N+1))."""
    if samples < 10_000:
        raise InsufficientSamplesError("moment checks need at least 1e4 samples")
    sampler = HaarSampler(N, seed)
    psi = sampler.sample_state()
    m2, m4 = _Moments(), _Moments()
    for phi in sampler.batches(samples):
        p = np.abs(phi @ psi.conj()) ** 2
        m2.add(p)
        m4.add(p * p)
    return MCReport("moments", N, samples, seed, (
        Estimate("overlap^2", m2.mean, m2.stderr, 1.0 / N),
        Estimate("overlap^4", m4.mean, m4.stderr, 2.0 / (N * (N + 1))),
    ))


def cap_overlap_closed_form(N: int, theta: float, psi_chi_overlap: float) -> float:
    """Integral of |<psi|phi>|^2 over the cap |<chi|phi>|^2 >= cos^2 theta."""
    S = cap_volume(N, theta)
    return S * (math.cos(theta) ** 2 * psi_chi_overlap + math.sin(theta) ** 2 / N)


def cap_overlap_check(N: int, theta: float, chi=None, psi=None, samples: int = 1_000_000,
                      seed: int = 0) -> MCReport:
    """Monte Carlo estimate of the cap-restricted overlap integral and the cap volume.

    ``chi`` defaults to the first basis vector and ``psi`` to a Haar-random state.
    """
    if not 0 < theta <= HALF_PI:
        raise ValueError("theta must lie in (0, pi/2]")
    sampler = HaarSampler(N, seed)
    if chi is None:
        chi = np.zeros(N, dtype=complex)
        chi[0] = 1.0
    chi = np.asarray(chi, dtype=complex)
    psi = sampler.sample_state() if psi is None else np.asarray(psi, dtype=complex)
    volume = cap_volume(N, theta)
    if volume < 1e-4:
        raise InsufficientSamplesError(
            f"cap volume {volume:.2e} is below 1e-4; accepted samples would be too few")
    if volume * samples < 1_000:
        raise InsufficientSamplesError(
            f"expected only {volume * samples:.0f} accepted samples; raise the sample budget")
    c2 = math.cos(theta) ** 2
    overlap = _Moments()
    inside = _Moments()
    for phi in sampler.batches(samples):
        in_cap = (np.abs(phi @ chi.conj()) ** 2 >= c2).astype(float)
        overlap.add(in_cap * np.abs(phi @ psi.conj()) ** 2)
        inside.add(in_cap)
    x = float(abs(np.vdot(chi, psi)) ** 2)
    return MCReport("cap_overlap", N, samples, seed, (
        Estimate("cap_overlap", overlap.mean, overlap.stderr, cap_overlap_closed_form(N, theta, x)),
        Estimate("cap_volume", inside.mean, inside.stderr, volume),
    ), {"theta": theta, "psi_chi_overlap": x})


# -- brute-force (alpha, beta) search ----------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Grid over alpha in [0, alpha_max] and beta = -alpha (1 + u) / (N + 1), u in [0, 1].

    Each refinement re-centres the grid on the incumbent and shrinks both
    ranges by ``shrink``.
    """

    alpha_max: float | None = None
    n_alpha: int = 41
    n_u: int = 41
    n_theta: int = 721
    refinements: int = 8
    shrink: float = 0.25
    alphas: tuple | None = None
    betas: tuple | None = None


@dataclass(frozen=True)
class GridSearchResult:
    N: int
    alpha: float
    beta: float
    min_f: float
    bound_nats: float
    evaluations: int
    mc_max_z: float
    mc_feasible: bool
    mc_samples: int

    @property
    def bound_bits(self) -> float:
        return self.bound_nats / LN2

    def to_record(self) -> dict:
        rec = dict(self.__dict__)
        rec["bound_bits"] = self.bound_bits
        return rec


def _grid_values(N, alphas, betas, theta):
    a = np.asarray(alphas, dtype=float)[:, None]
    b = np.asarray(betas, dtype=float)[:, None]
    F = f_theta(N, theta[None, :], a, b)
    min_f = np.minimum(F.min(axis=1), 0.0)
    return analytic.objective(N, a[:, 0], b[:, 0], min_f), min_f


def refined_min_f(N, alpha, beta, n_theta=2001):
    """Minimum of F over theta: dense scan, then bounded polish around the best cell."""
    grid = np.linspace(0.0, HALF_PI, n_theta)
    vals = f_theta(N, grid, alpha, beta)
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_theta - 1)]
    best = min(float(vals[i]), 0.0)
    if hi > lo:
        res = minimize_scalar(lambda t: f_theta(N, t, alpha, beta), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def mc_constraint_check(N, alpha, beta, min_f, samples=200_000, seed=0, thetas=None):
    """Largest z-score of the Monte Carlo cap-constraint left-hand side above 1.

    For each aperture theta the psi integral is sampled with Haar states and
    the cap integral is taken from the overlap identity.
    """
    thetas = np.linspace(0.05, HALF_PI, 24) if thetas is None else np.asarray(thetas)
    sampler = HaarSampler(N, seed)
    chi = np.zeros(N, dtype=complex)
    chi[0] = 1.0
    x = np.concatenate([np.abs(batch @ chi.conj()) ** 2 for batch in sampler.batches(samples)])
    worst = -math.inf
    for th in thetas:
        S = cap_volume(N, th)
        c2, s2 = math.cos(th) ** 2, math.sin(th) ** 2
        log_pref = min_f + beta * S
        vals = np.exp(log_pref + alpha * S * (c2 * x + s2 / N))
        mean = vals.mean()
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        z = (mean - 1.0) / se if se > 0 else (0.0 if mean <= 1.0 else math.inf)
        worst = max(worst, z)
    return worst


def grid_search_bound(N: int, grid: GridSpec | None = None, samples: int = 200_000,
                      seed: int = 0) -> GridSearchResult:
    """Best certified value of the linear objective over an (alpha, beta) grid.

    Points are restricted to alpha >= 0 and -2 alpha/(N+1) <= beta <= -alpha/(N+1).
    The constant alpha_2/N + beta_2 is set to min_theta F, which makes every
    grid point feasible; the incumbent is then re-checked with a polished
    minimum of F and with a Monte Carlo evaluation of the cap constraints.
    """
    N = int(N)
    grid = grid or GridSpec()
    theta = np.linspace(0.0, HALF_PI, grid.n_theta)
    evaluations = 0

    if grid.alphas is not None:
        alphas = np.asarray(grid.alphas, dtype=float)
        betas = np.asarray(grid.betas if grid.betas is not None else [0.0] * len(alphas), dtype=float)
        if alphas.size == 0:
            raise ValueError("empty feasible grid")
        inside = (alphas >= 0) & (betas >= -2 * alphas / (N + 1) - 1e-15) & (betas <= -alphas / (N + 1) + 1e-15)
        if not inside.any():
            raise ValueError("empty feasible grid: no point lies in the significant region")
        vals, _ = _grid_values(N, alphas[inside], betas[inside], theta)
        evaluations = int(inside.sum())
        j = int(np.argmax(vals))
        best_a, best_b = float(alphas[inside][j]), float(betas[inside][j])
    else:
        a_hi = grid.alpha_max or 3.0 * N**2 * (N + 1)
        a_lo, u_lo, u_hi = 0.0, 0.0, 1.0
        best_a = best_b = 0.0
        for _ in range(grid.refinements + 1):
            A, U = np.meshgrid(np.linspace(a_lo, a_hi, grid.n_alpha), np.linspace(u_lo, u_hi, grid.n_u))
            A, U = A.ravel(), U.ravel()
            B = -A * (1.0 + U) / (N + 1)
            vals, _ = _grid_values(N, A, B, theta)
            evaluations += A.size
            j = int(np.argmax(vals))
            best_a, best_b, best_u = float(A[j]), float(B[j]), float(U[j])
            a_span = (a_hi - a_lo) * grid.shrink
            u_span = (u_hi - u_lo) * grid.shrink
            a_lo, a_hi = max(0.0, best_a - a_span), best_a + a_span
            u_lo, u_hi = max(0.0, best_u - u_span), min(1.0, best_u + u_span)

    min_f = refined_min_f(N, best_a, best_b)
    value = analytic.objective(N, best_a, best_b, min_f)
    if best_a == 0.0 and best_b == 0.0:
        return GridSearchResult(N, 0.0, 0.0, 0.0, 0.0, evaluations, 0.0, True, 0)
    z = mc_constraint_check(N, best_a, best_b, min_f, samples, seed) if samples else 0.0
    return GridSearchResult(N, best_a, best_b, min_f, value, evaluations, z, z <= Z_BAND, samples)
