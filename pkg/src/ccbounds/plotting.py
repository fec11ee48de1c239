"""Static figures rendered next to the CSV output.

The CSV files stay the data contract; these images are a convenience for
eyeballing a run.  Everything draws through the non-interactive Agg backend.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analytic import HALF_PI, f_theta, solve  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 150,
    "savefig.bbox": "tight",
    "axes.linewidth": 0.6,
    "font.size": 9,
    "legend.frameon": False,
}


def _float(col):
    return np.array([float(v) if v not in ("", None) else np.nan for v in col])


def plot_landscape(dimensions=(2, 3, 4), path="landscape.png", points=2000):
    """F(theta) at the optimal (alpha, beta) for each N, with the predicted minimum marked."""
    theta = np.linspace(0.0, HALF_PI, points)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for N in dimensions:
            sol = solve(N)
            line, = ax.plot(theta, f_theta(N, theta, sol.alpha, sol.beta), lw=1.0, label=f"N = {N}")
            ax.axvline(math.asin(N ** (1.0 / (2 - 2 * N))), color=line.get_color(), ls=":", lw=0.8)
        ax.set_xlabel(r"$\theta$ (rad)")
        ax.set_ylabel(r"$\mathcal{F}(\theta)$")
        ax.set_xlim(0, HALF_PI)
        ax.legend()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_sweep(rows, path="bounds.png"):
    """Bounds against N: analytic, asymptotic, conjectured, and the log2 N reference."""
    N = _float([r["N"] for r in rows])
    bound = _float([r.get("bound_bits", "") for r in rows])
    asym = _float([r.get("asymptotic_bits", "") for r in rows])
    conj = _float([r.get("conjectured_bits", "") for r in rows])
    with plt.rc_context(STYLE):
        fig, (ax, rel) = plt.subplots(2, 1, sharex=True, figsize=(5.0, 5.0),
                                      gridspec_kw={"height_ratios": [3, 1]})
        ax.plot(N, bound, "k-", lw=1.2, label="lower bound")
        ax.plot(N, asym, "C0--", lw=1.0, label="large-N approximation")
        ax.plot(N, np.log2(N), "C2:", lw=1.0, label=r"$\log_2 N$")
        ax.set_ylabel("bits")
        ax.legend(loc="lower right")
        ax2 = ax.twinx()
        ax2.plot(N, conj, "C3-", lw=0.8, alpha=0.6)
        ax2.set_ylabel("conjectured bound (bits)", color="C3")
        rel.plot(N, 100 * (bound - asym) / asym, "k-", lw=0.8)
        rel.axhline(0, color="0.6", lw=0.5)
        rel.set_xlabel("N")
        rel.set_ylabel("rel. diff. (%)")
        fig.savefig(path)
        plt.close(fig)
    return path
