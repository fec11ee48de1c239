"""Command-line entry point.

Every verb prints a short human summary on stdout and, with ``--out``, writes
a machine-readable artifact (JSON record or CSV) whose header embeds the
resolved configuration and the sha256 of every input file.

Exit status: 0 success, 1 computed but a check failed, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analytic, montecarlo
from .cbox import CBoxError, InputPrior, check_prior, load_any_box
from .dual import ExtractionError, certify_lower_bound, extract_certificate, load_certificate, \
    save_certificate, solve_dual
from .optimality import check_conditions, soundness_radius
from .primal import BudgetError, load_policy, save_policy, solve_primal

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
THREADS_ENV = "CCBOUNDS_THREADS"
LN2 = math.log(2.0)

log = logging.getLogger("ccbounds")


class UsageError(Exception):
    pass


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be positive")
    return n


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["version"] = __version__
    cfg["threads"] = thread_count()
    return cfg


def _inputs(*paths) -> dict:
    return {str(p): sha256(p) for p in paths if p}


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def emit(args, result: dict, inputs: dict | None = None):
    if not args.out:
        return
    doc = {"config": _config(args), "inputs_sha256": inputs or {}, "result": result}
    Path(args.out).write_text(json.dumps(_jsonable(doc), indent=2) + "\n")


def _fmt_value(nats: float, units: str) -> str:
    bits = nats / LN2
    if units == "nats":
        return f"{nats:.6f} nats ({bits:.6f} bits)"
    return f"{bits:.6f} bits ({nats:.6f} nats)"


def load_prior(spec: str, box) -> InputPrior:
    if spec in (None, "uniform"):
        return InputPrior.uniform(box.num_states)
    with open(spec) as fh:
        doc = json.load(fh)
    vec = doc.get("prior") if isinstance(doc, dict) else doc
    if vec is None:
        raise CBoxError(f"{spec}: expected a list or an object with a 'prior' field")
    prior = InputPrior(np.asarray(vec, dtype=float))
    check_prior(box, prior)
    return prior


def _prior_inputs(args):
    return [args.input] + ([args.prior] if args.prior not in (None, "uniform") else [])


# -- verbs ----------------------------------------------------------------------

def cmd_solve_primal(args) -> int:
    box = load_any_box(args.input)
    prior = load_prior(args.prior, box)
    res = solve_primal(box, prior, tol=args.tol, max_iter=args.max_iter, damping=args.damping)
    rec = res.to_record()
    if args.policy_out:
        save_policy(res.policy, args.policy_out)
    if args.cert_out:
        try:
            save_certificate(extract_certificate(res), args.cert_out)
            rec["certificate"] = args.cert_out
        except ExtractionError as exc:
            rec["certificate_error"] = str(exc)
            log.warning("certificate extraction failed: %s", exc)
    print(f"primal minimum: {_fmt_value(res.value_nats, args.units)}")
    print(f"certified lower bound: {_fmt_value(res.dual_value, args.units)}  "
          f"gap {res.gap:.2e} nats  converged={res.converged}")
    emit(args, rec, _inputs(*_prior_inputs(args)))
    return EXIT_OK if res.converged else EXIT_FAILED


def cmd_solve_dual(args) -> int:
    box = load_any_box(args.input)
    prior = load_prior(args.prior, box)
    res = solve_dual(box, prior, tol=args.tol, max_iter=args.max_iter)
    if args.cert_out:
        save_certificate(res.certificate, args.cert_out)
    print(f"dual bound: {_fmt_value(res.bound_nats, args.units)}  "
          f"feasible={res.feasible} converged={res.converged}")
    emit(args, res.to_record(*box.shape[::2]), _inputs(*_prior_inputs(args)))
    return EXIT_OK if res.feasible and res.converged else EXIT_FAILED


def cmd_certify(args) -> int:
    box = load_any_box(args.input)
    prior = load_prior(args.prior, box)
    cert = load_certificate(args.certificate)
    res = certify_lower_bound(cert, box, prior, tol=args.tol)
    rec = res.to_record(box.num_outcomes, box.num_measurements)
    print(f"feasible={res.feasible}  bound: {_fmt_value(res.bound_nats, args.units)}  "
          f"worst slack {res.worst_slack:.12g} at sequence {res.worst_sequence}")
    emit(args, rec, _inputs(*_prior_inputs(args), args.certificate))
    return EXIT_OK if res.feasible else EXIT_FAILED


def cmd_check(args) -> int:
    box = load_any_box(args.input)
    policy = load_policy(args.policy)
    prior = policy.prior if args.prior is None else load_prior(args.prior, box)
    cert = load_certificate(args.certificate)
    report = check_conditions(policy, cert, box, prior, tol=args.tol)
    rec = report.to_record()
    rec["soundness_radius_nats"] = soundness_radius(report, cert, box)
    for name, value in report.residuals.items():
        print(f"{name:22s} {value:.3e}")
    print("PASS" if report.passed else "FAIL", f"(tolerance {args.tol:g})")
    emit(args, rec, _inputs(*_prior_inputs(args), args.policy, args.certificate))
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_analytic(args) -> int:
    t0 = time.perf_counter()
    sol = analytic.solve(args.dimension, exact=args.exact)
    rec = sol.to_row()
    rec["diagnostics"] = sol.diagnostics
    rec["runtime_s"] = time.perf_counter() - t0
    print(f"N={sol.N} branch={sol.branch}: {_fmt_value(sol.bound_nats, args.units)}")
    print(f"alpha={sol.alpha:.10g} beta={sol.beta:.10g} theta_m={sol.theta_m:.10g}")
    if args.plot:
        from . import plotting
        plotting.plot_landscape((args.dimension,), args.plot)
    emit(args, rec)
    return EXIT_OK


def cmd_sweep(args) -> int:
    workers = thread_count()
    t0 = time.perf_counter()
    rows = analytic.sweep(args.N_from, args.N_to, workers=workers)
    elapsed = time.perf_counter() - t0
    header = [f"ccbounds {__version__} sweep",
              "config " + json.dumps(_jsonable(_config(args)), sort_keys=True),
              "conjectured_bits relies on two unproven hypotheses; it is not a proven bound"]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            analytic.write_csv(rows, fh, header)
    else:
        analytic.write_csv(rows, sys.stdout, header)
    if args.plot:
        from . import plotting
        plotting.plot_sweep(rows, args.plot)
    failed = [r["N"] for r in rows if r.get("error")]
    print(f"{len(rows)} rows in {elapsed:.2f} s" + (f"; failed N: {failed}" if failed else ""),
          file=sys.stderr if not args.out else sys.stdout)
    return EXIT_FAILED if failed else EXIT_OK


def cmd_verify(args) -> int:
    checks = args.checks.split(",")
    unknown = set(checks) - {"moments", "cap", "grid"}
    if unknown:
        raise UsageError(f"unknown checks: {sorted(unknown)}")
    reports = []
    ok = True
    if "moments" in checks:
        r = montecarlo.moment_checks(args.dimension, args.samples, args.seed)
        reports.append(r.to_record())
        ok &= r.passed
    if "cap" in checks:
        r = montecarlo.cap_overlap_check(args.dimension, args.theta, samples=args.samples, seed=args.seed)
        reports.append(r.to_record())
        ok &= r.passed
    if "grid" in checks:
        g = montecarlo.grid_search_bound(args.dimension, samples=min(args.samples, 200_000), seed=args.seed)
        ref = analytic.solve(args.dimension)
        agree = abs(g.bound_bits - ref.bound_bits) <= 1e-2
        reports.append({"check": "grid", **g.to_record(), "analytic_bits": ref.bound_bits,
                        "passed": bool(agree and g.mc_feasible)})
        ok &= agree and g.mc_feasible
    for r in reports:
        print(f"{r['check']:12s} {'PASS' if r['passed'] else 'FAIL'}")
        for e in r.get("estimates", []):
            print(f"    {e['name']:12s} mean {e['mean']:.6g} target {e['target']:.6g} z {e['z']:+.2f}")
        if r["check"] == "grid":
            print(f"    grid {r['bound_bits']:.6f} bits vs analytic {r['analytic_bits']:.6f} bits")
    emit(args, {"passed": ok, "reports": reports})
    return EXIT_OK if ok else EXIT_FAILED


def cmd_sandwich(args) -> int:
    lower = args.bits
    if lower is None:
        lower = analytic.solve(args.dimension).bound_bits
    upper = analytic.sandwich_upper(lower)
    print(f"asymptotic cost {lower:.6f} bits  <=  one-shot cost  <=  {upper:.6f} bits")
    emit(args, {"asymptotic_bits": lower, "one_shot_upper_bits": upper})
    return EXIT_OK


def cmd_conjecture(args) -> int:
    lo, hi = args.dimension, args.to or args.dimension
    if hi < lo:
        raise UsageError("--to must not be below --dimension")
    Ns = np.arange(lo, hi + 1, dtype=float)
    conj = analytic.conjectured_bits_array(Ns)
    half = 0.5 * Ns * np.log2(Ns)
    holds = bool(np.all(conj >= half - 1e-9 * np.maximum(half, 1)))
    if lo == hi:
        cb = analytic.conjectured_bound(lo)
        print(f"N={lo}: {cb.bound_bits:.6f} bits (conjecture-dependent); (N/2) log2 N = {cb.half_n_log_n_bits:.6f}")
        rec = {"N": lo, "bound_bits_conjectured": cb.bound_bits, "bound_nats_conjectured": cb.bound_nats,
               "half_n_log2_n": cb.half_n_log_n_bits, "qubits": cb.qubits,
               "qubit_identity_bits": cb.qubit_identity_bits}
    else:
        worst = int(np.argmin(conj - half))
        print(f"N in [{lo}, {hi}]: bound >= (N/2) log2 N holds={holds}; "
              f"tightest at N={int(Ns[worst])} (margin {conj[worst] - half[worst]:.3e} bits)")
        rec = {"from": lo, "to": hi, "min_margin_bits": float(conj[worst] - half[worst]),
               "min_margin_N": int(Ns[worst])}
    print(f"note: {analytic.CONJECTURE_FLAG}")
    rec.update({"inequality_holds": holds, "conjecture_dependent": True, "flag": analytic.CONJECTURE_FLAG})
    emit(args, rec)
    return EXIT_OK if holds else EXIT_FAILED


# -- parser -----------------------------------------------------------------------

def _dimension(text):
    n = int(text)
    if n < 2:
        raise argparse.ArgumentTypeError("dimension must be at least 2")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccbounds", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, metavar="verb")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write a machine-readable record here")
    common.add_argument("--units", choices=("bits", "nats"), default="bits")
    common.add_argument("--seed", type=int, default=0)

    boxed = argparse.ArgumentParser(add_help=False)
    boxed.add_argument("--input", required=True, help="C-box or ensemble JSON file")
    boxed.add_argument("--prior", help="'uniform' (default) or a JSON file with the prior; "
                       "check defaults to the prior stored in the policy")

    s = sub.add_parser("solve-primal", parents=[common, boxed], help="minimize I(a; s_vec)")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iter", type=int, default=20_000)
    s.add_argument("--damping", type=float, default=1.0)
    s.add_argument("--policy-out")
    s.add_argument("--cert-out", help="write the certificate extracted from the optimum")
    s.set_defaults(func=cmd_solve_primal)

    s = sub.add_parser("solve-dual", parents=[common, boxed], help="maximize the dual objective")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--cert-out")
    s.set_defaults(func=cmd_solve_dual)

    s = sub.add_parser("certify", parents=[common, boxed], help="turn a certificate into a proven bound")
    s.add_argument("--certificate", required=True)
    s.add_argument("--tol", type=float, default=1e-9)
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("check", parents=[common, boxed], help="evaluate the optimality conditions")
    s.add_argument("--policy", required=True)
    s.add_argument("--certificate", required=True)
    s.add_argument("--tol", type=float, default=1e-6)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("analytic", parents=[common], help="closed-form bound for dimension N")
    s.add_argument("--dimension", "-N", type=_dimension, required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exact", dest="exact", action="store_true", default=True)
    g.add_argument("--approx", dest="exact", action="store_false")
    s.add_argument("--plot", help="also render the F(theta) landscape to this image file")
    s.set_defaults(func=cmd_analytic)

    s = sub.add_parser("sweep", parents=[common], help="bounds for a range of N as CSV")
    s.add_argument("--from", dest="N_from", type=_dimension, default=2)
    s.add_argument("--to", dest="N_to", type=_dimension, default=100)
    s.add_argument("--plot", help="also render the bounds-vs-N figure to this image file")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", parents=[common], help="Monte Carlo checks of the Haar identities")
    s.add_argument("--dimension", "-N", type=_dimension, required=True)
    s.add_argument("--samples", type=int, default=1_000_000)
    s.add_argument("--theta", type=float, default=1.0)
    s.add_argument("--checks", default="moments,cap", help="comma list from moments,cap,grid")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("sandwich", parents=[common], help="one-shot upper bound from an asymptotic cost")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--bits", type=float, help="asymptotic cost in bits")
    g.add_argument("--dimension", "-N", type=_dimension, help="use the analytic bound for this N")
    s.set_defaults(func=cmd_sandwich)

    s = sub.add_parser("conjecture", parents=[common], help="the conjecture-dependent bound")
    s.add_argument("--dimension", "-N", type=_dimension, required=True)
    s.add_argument("--to", type=_dimension, help="check the inequality over [dimension, to]")
    s.set_defaults(func=cmd_conjecture)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, CBoxError, BudgetError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"ccbounds {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
