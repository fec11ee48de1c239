"""Special functions used by the analytic bound pipeline.

Log-gamma, the regularized incomplete gamma pair P/Q and the principal
branch of the Lambert W function.  The incomplete gamma routines accept
numpy arrays (the bound landscape is scanned on dense angle grids) and
return scalars for scalar input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpecialFnConfig",
    "ln_gamma",
    "reg_gamma_p",
    "reg_gamma_q",
    "log_reg_gamma_p",
    "lambert_w0",
]

_INV_E = math.exp(-1.0)
_TINY = 1e-300


@dataclass(frozen=True)
class SpecialFnConfig:
    accuracy: float = 1e-12
    max_iter: int = 10_000

    def __post_init__(self):
        if not (0.0 < self.accuracy <= 1e-6):
            raise ValueError(f"accuracy must lie in (0, 1e-6], got {self.accuracy}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


DEFAULT_CONFIG = SpecialFnConfig()


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for x > 0."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"ln_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def _check_gamma_args(a, y):
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(~(a > 0)):
        raise ValueError("incomplete gamma requires shape a > 0")
    if np.any(~(y >= 0)):
        raise ValueError("incomplete gamma requires y >= 0")
    return np.broadcast_arrays(a, y)


def _series_log_p(a, y, cfg):
    # log P(a, y) = a log y - y - lnG(a+1) + log sum_k y^k / ((a+1)...(a+k))
    term = np.ones_like(y)
    total = np.ones_like(y)
    denom = a.copy()
    active = np.ones(y.shape, dtype=bool)
    for _ in range(cfg.max_iter):
        denom = denom + 1.0
        term = np.where(active, term * y / denom, term)
        total = np.where(active, total + term, total)
        active &= term > total * cfg.accuracy * 1e-3
        if not active.any():
            break
    else:
        raise RuntimeError("incomplete gamma series did not converge")
    lg = np.vectorize(math.lgamma, otypes=[float])(a + 1.0)
    return a * np.log(y) - y - lg + np.log(total)


def _cf_log_q(a, y, cfg):
    # modified Lentz evaluation of the Legendre continued fraction for Gamma(a, y)
    b = y + 1.0 - a
    c = np.full_like(y, 1.0 / _TINY)
    d = 1.0 / np.where(np.abs(b) < _TINY, _TINY, b)
    h = d.copy()
    active = np.ones(y.shape, dtype=bool)
    for i in range(1, cfg.max_iter + 1):
        an = -i * (i - a)
        b = b + 2.0
        d_new = an * d + b
        d_new = np.where(np.abs(d_new) < _TINY, _TINY, d_new)
        c_new = b + an / c
        c_new = np.where(np.abs(c_new) < _TINY, _TINY, c_new)
        d_new = 1.0 / d_new
        delta = d_new * c_new
        d = np.where(active, d_new, d)
        c = np.where(active, c_new, c)
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > cfg.accuracy * 1e-3
        if not active.any():
            break
    else:
        raise RuntimeError("incomplete gamma continued fraction did not converge")
    lg = np.vectorize(math.lgamma, otypes=[float])(a)
    return -y + a * np.log(y) - lg + np.log(h)


def _log_pq(a, y, cfg):
    a, y = _check_gamma_args(a, y)
    a = np.array(a, dtype=float)
    y = np.array(y, dtype=float)
    log_p = np.empty(y.shape)
    log_q = np.empty(y.shape)

    zero = y == 0.0
    log_p[zero] = -np.inf
    log_q[zero] = 0.0

    use_series = (~zero) & (y < a + 1.0)
    if use_series.any():
        lp = _series_log_p(a[use_series], y[use_series], cfg)
        log_p[use_series] = lp
        log_q[use_series] = np.log1p(-np.exp(lp))

    use_cf = (~zero) & ~use_series
    if use_cf.any():
        lq = _cf_log_q(a[use_cf], y[use_cf], cfg)
        log_q[use_cf] = lq
        log_p[use_cf] = np.log1p(-np.exp(lq))
    return log_p, log_q


def _unwrap(x, like):
    return float(x) if np.ndim(like) == 0 else x


def log_reg_gamma_p(a, y, config: SpecialFnConfig = DEFAULT_CONFIG):
    """log P(a, y) with P the regularized lower incomplete gamma function.

    Stays accurate when P underflows (y << a), which is the regime the
    small-angle end of the bound landscape lives in.
    """
    log_p, _ = _log_pq(a, y, config)
    return _unwrap(log_p, np.broadcast(np.asarray(a), np.asarray(y)))


def reg_gamma_p(a, y, config: SpecialFnConfig = DEFAULT_CONFIG):
    log_p, _ = _log_pq(a, y, config)
    return _unwrap(np.exp(log_p), np.broadcast(np.asarray(a), np.asarray(y)))


def reg_gamma_q(a, y, config: SpecialFnConfig = DEFAULT_CONFIG):
    """Regularized upper incomplete gamma Q(a, y) = Gamma(a, y) / Gamma(a).

    Series for y < a + 1, continued fraction otherwise.
    """
    _, log_q = _log_pq(a, y, config)
    return _unwrap(np.exp(log_q), np.broadcast(np.asarray(a), np.asarray(y)))


_BRANCH_SERIES = (-1.0, 1.0, -1.0 / 3.0, 11.0 / 72.0, -43.0 / 540.0,
                  769.0 / 17280.0, -221.0 / 8505.0)


def _w0_branch_series(x):
    p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
    return sum(c * p**k for k, c in enumerate(_BRANCH_SERIES))


def lambert_w0(x, config: SpecialFnConfig = DEFAULT_CONFIG):
    """Principal branch W0 of the Lambert W function, w * exp(w) = x, w >= -1.

    Halley iteration from a piecewise initial guess; within 1e-6 of the
    branch point -1/e the series in sqrt(2(e x + 1)) is used directly.
    Accepts scalars or arrays.
    """
    if np.ndim(x) == 0:
        return float(_w0_array(np.array([float(x)]), config)[0])
    return _w0_array(np.asarray(x, dtype=float), config)


def _w0_array(x, config):
    branch_tol = 1e-12
    if np.any(np.isnan(x)) or np.any(x < -_INV_E - branch_tol):
        bad = x[np.isnan(x) | (x < -_INV_E - branch_tol)][0]
        raise ValueError(f"lambert_w0 is real only for x >= -1/e, got {bad}")
    out = np.empty_like(x)
    near = x + _INV_E <= 1e-6
    out[near] = np.maximum([_w0_branch_series(v) for v in x[near]], -1.0)
    rest = ~near
    v = x[rest]
    w = np.empty_like(v)
    low = v < -0.25
    mid = (~low) & (v < 3.0)
    high = v >= 3.0
    w[low] = [_w0_branch_series(t) for t in v[low]]
    l1 = np.log1p(v[mid])
    w[mid] = l1 * (1.0 - np.log1p(l1) / (2.0 + l1))
    lx = np.log(v[high])
    w[high] = lx - np.log(lx) + np.log(lx) / lx
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.max_iter):
            ew = np.exp(w)
            f = w * ew - v
            wp1 = w + 1.0
            step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
            step = np.where(np.isfinite(step) & (v != 0), step, 0.0)
            w = w - step
            if np.all(np.abs(step) <= config.accuracy * 1e-2 * np.maximum(1.0, np.abs(w))):
                break
        else:
            raise RuntimeError("Halley iteration for W0 did not converge")
    w[v == 0] = 0.0
    w[np.isposinf(v)] = np.inf
    out[rest] = np.maximum(w, -1.0)
    return out
