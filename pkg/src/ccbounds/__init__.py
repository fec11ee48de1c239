"""Bounds on the classical communication cost of simulating quantum channels.

Finite instances go through a primal/dual convex pair (``primal``, ``dual``,
``optimality``); the noiseless N-level channel with two-outcome rank-1
measurements has a closed-form pipeline in ``analytic``, cross-checked by
``montecarlo``.
"""

from .cbox import CBox, CBoxError, InputPrior, SchemaError, load_any_box, load_cbox, save_cbox
from .dual import DualCertificate, certify_lower_bound, extract_certificate, solve_dual
from .optimality import OptimalityReport, check_conditions, duality_gap
from .primal import PrimalResult, SimulationPolicy, solve_primal

__version__ = "0.1.0"

__all__ = [
    "CBox", "CBoxError", "InputPrior", "SchemaError", "load_any_box", "load_cbox", "save_cbox",
    "DualCertificate", "certify_lower_bound", "extract_certificate", "solve_dual",
    "OptimalityReport", "check_conditions", "duality_gap",
    "PrimalResult", "SimulationPolicy", "solve_primal",
]
