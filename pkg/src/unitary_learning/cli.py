"""Command-line front end.

Exit codes: 0 ok, 2 usage, 3 convergence failure, 4 runtime error,
5 bound violation, 6 oracle mismatch.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import __version__
from .learning import (
    ConvergenceFailure,
    LearningProblem,
    UnsupportedM,
    fidelity_of_storage,
    optimize_storage,
    storage_state,
)
from .oracle import CapExceeded
from .simulator import (
    SimConfig,
    alignment_fidelity,
    alignment_reference,
    chunk_rng,
    estimation_retrieval,
    monte_carlo_fidelity,
    retrieval_fidelity,
    random_covariant_retrieval,
)

SCHEMA_VERSION = "1.0"
CSV_COLUMNS = ("group", "N", "state", "F", "one_minus_F")
STATES = ("optimal", "likelihood", "sine")

EXIT_OK, EXIT_USAGE, EXIT_CONVERGENCE, EXIT_RUNTIME, EXIT_BOUND, EXIT_ORACLE = 0, 2, 3, 4, 5, 6


class UsageError(Exception):
    pass


def _problem(args) -> LearningProblem:
    return LearningProblem(args.group, args.n, args.m, args.task, args.figure)


def _spec_dict(spec) -> dict:
    return {str(j): q for j, q in spec.probs}


def _report(args, command: str, results: dict, timings: dict | None = None,
            problem: LearningProblem | None = None) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "version": __version__, "command": command, "results": results}
    if problem is not None:
        out["problem"] = problem.as_dict()
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if timings is not None and getattr(args, "timings", False):
        out["timings"] = timings
    return out


def dumps(report: dict) -> str:
    """Stable JSON: sorted keys, shortest round-trip float repr."""
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=True)


def _emit(args, report: dict, text_lines: list[str], rows: list[dict] | None = None):
    fmt = getattr(args, "format", "text")
    if fmt == "json":
        print(dumps(report))
    elif fmt == "csv" and rows is not None:
        w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    else:
        print("\n".join(text_lines))


# ---------------------------------------------------------------------------
# commands


def cmd_fidelity(args) -> int:
    p = _problem(args)
    t0 = time.perf_counter()
    spec = storage_state(p, args.state)
    F = fidelity_of_storage(spec, p)
    results = {"state": args.state, "F": F, "p": _spec_dict(spec)}
    report = _report(args, "fidelity", results, {"total_s": time.perf_counter() - t0}, p)
    lines = [f"F = {F!r}"] + [f"p[{j}] = {q!r}" for j, q in spec.probs]
    rows = [{"label": j, "p": q, "F": F} for j, q in spec.probs]
    _emit(args, report, lines, rows)
    return EXIT_OK


def cmd_simulate(args) -> int:
    p = _problem(args)
    if args.align:
        p = p.with_(task="invert")
    t0 = time.perf_counter()
    spec = storage_state(p, args.state)
    cfg = SimConfig(samples=args.samples, seed=args.seed, chunk=args.chunk)
    if args.align:
        sim = alignment_fidelity(p, spec, cfg)
        reference = alignment_reference(p, spec)
        quantity = "pure_state_fidelity"
    else:
        sim = monte_carlo_fidelity(p, spec, cfg)
        reference = fidelity_of_storage(spec, p)
        quantity = "channel_fidelity"
    sigmas = abs(sim.mean - reference) / sim.stderr if sim.stderr > 0 else 0.0
    results = {
        "quantity": quantity,
        "state": args.state,
        "mean": sim.mean,
        "stderr": sim.stderr,
        "samples": sim.samples,
        "reference": reference,
        "deviation_sigmas": sigmas,
        "p": _spec_dict(spec),
    }
    report = _report(args, "simulate", results, {"total_s": time.perf_counter() - t0}, p)
    lines = [
        f"{quantity}: {sim.mean!r} +/- {sim.stderr!r} ({sim.samples} samples)",
        f"reference: {reference!r} ({sigmas:.2f} sigma)",
    ]
    _emit(args, report, lines)
    return EXIT_OK


def cmd_falsify(args) -> int:
    p = _problem(args)
    t0 = time.perf_counter()
    best = optimize_storage(p)
    spec, bound = best.storage, best.fidelity
    embedded = retrieval_fidelity(estimation_retrieval(p), spec)
    rng = chunk_rng(args.seed, 0)
    values = np.array([random_covariant_retrieval(p, spec, rng)[1] for _ in range(args.draws)])
    violations = int(np.sum(values > bound + args.tol))
    top = float(values.max())
    results = {
        "F_est": bound,
        "estimation_strategy_F": embedded,
        "draws": args.draws,
        "max_F": top,
        "mean_F": float(values.mean()),
        "violations": violations,
        "tolerance": args.tol,
    }
    report = _report(args, "falsify", results, {"total_s": time.perf_counter() - t0}, p)
    lines = [
        f"F_est = {bound!r}",
        f"estimation strategy F = {embedded!r}",
        f"max F over {args.draws} draws = {top!r}",
        f"violations: {violations}",
    ]
    _emit(args, report, lines)
    return EXIT_BOUND if violations else EXIT_OK


def cmd_verify(args) -> int:
    from .oracle import verify

    p = _problem(args)
    if p.m != 1:
        raise UsageError("verify covers M = 1 only")
    t0 = time.perf_counter()
    rng = chunk_rng(args.seed, 0)
    checks = {}
    for kind in args.states:
        try:
            spec = storage_state(p, kind)
        except ValueError as exc:
            checks[kind] = {"skipped": str(exc)}
            continue
        checks[kind] = verify(p, spec, rng, pairs=args.pairs)
    ok = all(c.get("ok", True) for c in checks.values())
    report = _report(args, "verify", {"checks": checks, "ok": ok}, {"total_s": time.perf_counter() - t0}, p)
    lines = []
    for kind, c in checks.items():
        if "skipped" in c:
            lines.append(f"{kind}: skipped ({c['skipped']})")
            continue
        lines.append(
            f"{kind}: {'PASS' if c['ok'] else 'FAIL'} comb={c['comb_ok']} "
            f"covariance={c['covariance_residual']:.2e} "
            f"fidelity full={c['full_fidelity']!r} block={c['block_fidelity']!r}"
        )
    _emit(args, report, lines)
    return EXIT_OK if ok else EXIT_ORACLE


def fit_scaling(ns, gaps) -> dict:
    """Log-log slope of ``1 - F`` against ``N``.

    ``naive_slope`` is the plain least-squares slope; ``slope`` also fits a
    ``b/N`` term in ``log(1-F)`` so finite-size corrections do not bias the exponent.
    ``constant`` is ``N^s (1-F)`` at the largest ``N`` with the exponent rounded.
    """
    ns = np.asarray(ns, dtype=float)
    y = np.log(np.asarray(gaps, dtype=float))
    x = np.log(ns)
    naive = float(np.polyfit(x, y, 1)[0])
    design = np.column_stack([np.ones_like(x), x, 1 / ns])
    coef = np.linalg.lstsq(design, y, rcond=None)[0]
    exponent = round(-float(coef[1]))
    return {
        "slope": float(coef[1]),
        "naive_slope": naive,
        "constant": float(ns[-1] ** exponent * gaps[-1]),
        "n_min": int(ns[0]),
        "n_max": int(ns[-1]),
    }


def _parse_range(text: str) -> range:
    try:
        a, b = (int(v) for v in text.split(".."))
    except ValueError:
        raise UsageError(f"--n-range must look like a..b, got {text!r}") from None
    if a < 1 or b < a:
        raise UsageError(f"empty or invalid range {text!r}")
    return range(a, b + 1)


def sweep_rows(group: str, ns, states, task: str = "emulate") -> list[dict]:
    rows = []
    for state in states:
        for n in ns:
            p = LearningProblem(group, n, 1, task)
            F = fidelity_of_storage(storage_state(p, state), p)
            rows.append({"group": group, "N": n, "state": state, "F": F, "one_minus_F": 1 - F})
    return rows


def cmd_sweep(args) -> int:
    ns = _parse_range(args.n_range)
    rows = []
    fits = {}
    for group in args.groups:
        group_rows = sweep_rows(group, ns, args.states, args.task)
        rows += group_rows
        for state in args.states:
            sel = [r for r in group_rows if r["state"] == state and r["one_minus_F"] > 0]
            if len(sel) >= 3:
                fits[f"{group}/{state}"] = fit_scaling([r["N"] for r in sel], [r["one_minus_F"] for r in sel])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r["group"], r["N"], r["state"], repr(r["F"]), repr(r["one_minus_F"])])
    fit_report = {"schema_version": SCHEMA_VERSION, "command": "sweep", "fits": fits}
    text = dumps(fit_report)
    if args.fit_report:
        with open(args.fit_report, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _states(text: str) -> list[str]:
    states = [s.strip() for s in text.split(",") if s.strip()]
    for s in states:
        if s not in STATES:
            raise argparse.ArgumentTypeError(f"unknown state {s!r}; choose from {STATES}")
    return states


def _groups(text: str) -> list[str]:
    groups = [s.strip() for s in text.split(",") if s.strip()]
    for g in groups:
        if g not in ("u1", "su2"):
            raise argparse.ArgumentTypeError(f"unknown group {g!r}")
    return groups


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _problem_args(sp, *, n_required=True):
    sp.add_argument("--group", choices=("u1", "su2"), required=True)
    sp.add_argument("--n", type=_positive, required=n_required)
    sp.add_argument("--m", type=_positive, default=1)
    sp.add_argument("--task", choices=("emulate", "invert"), default="emulate")
    sp.add_argument("--figure", choices=("global", "single-copy"), default="global")
    fmt = sp.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json")
    fmt.add_argument("--csv", dest="format", action="store_const", const="csv")
    sp.set_defaults(format="text")
    sp.add_argument("--timings", action="store_true", help="include wall-clock timings in JSON output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unitary-learning", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fidelity", help="optimal or reference storage state and its fidelity")
    _problem_args(sp)
    sp.add_argument("--state", choices=STATES, default="optimal")
    sp.set_defaults(func=cmd_fidelity)

    sp = sub.add_parser("simulate", help="Monte Carlo estimate of the fidelity")
    _problem_args(sp)
    sp.add_argument("--state", choices=STATES, default="optimal")
    sp.add_argument("--samples", type=_positive, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--chunk", type=_positive, default=20_000)
    sp.add_argument("--align", action="store_true", help="simulate reference-frame alignment")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("falsify", help="random covariant retrieval operators against F_est")
    _problem_args(sp)
    sp.add_argument("--draws", type=_positive, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_falsify)

    sp = sub.add_parser("verify", help="full-space oracle checks (N <= 3)")
    _problem_args(sp)
    sp.add_argument("--states", "--state", dest="states", type=_states, default=list(STATES))
    sp.add_argument("--pairs", type=_positive, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sweep", help="fidelity against N as CSV, with a scaling fit")
    sp.add_argument("--group", dest="groups", type=_groups, default=["u1", "su2"],
                    help="comma-separated groups")
    sp.add_argument("--n-range", default="8..128")
    sp.add_argument("--states", "--state", dest="states", type=_states, default=["optimal", "likelihood"])
    sp.add_argument("--task", choices=("emulate", "invert"), default="emulate")
    sp.add_argument("--fit-report", help="write the fit report here instead of stderr")
    sp.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, UnsupportedM, CapExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
