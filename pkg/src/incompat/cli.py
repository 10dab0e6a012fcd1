"""Command-line interface: ``incompat {compute,bounds,search,reproduce}``.

Measurement sets are given as files or named constructions::

    mub:<d>            computational basis and its Fourier transform
    theta:<radians>    qubit pair of projective measurements at angle theta
    qMUB:<d>           qubit MUB pair embedded in dimension d
    dev:3              qutrit pair minimising probabilistic robustness
    primemubs:<d>:<k>  first k MUBs of prime dimension d
    file:<path>        JSON measurement set (see MeasurementSet.to_json)

Exit codes: 0 success, 2 unparseable input, 3 solver failure, 4 reproduction mismatch.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds, repro
from .noise import ALL_KINDS, NoiseModelKind
from .povm import MeasurementSet, PovmError, mub_pair, named_pair, prime_mub_set, qmub_pair, qubit_theta_pair
from .robustness import verify_result, solve_robustness
from .sdp import SolverFailure
from .search import RESTRICTIONS, SearchConfig, estimate_chi

EXIT_PARSE, EXIT_SOLVER, EXIT_MISMATCH = 2, 3, 4
DIGITS = 12

log = logging.getLogger("incompat")


class InputError(ValueError):
    pass


def parse_construction(spec: str) -> MeasurementSet:
    """Measurement set from the named-construction grammar."""
    head, _, rest = spec.partition(":")
    try:
        if head == "file":
            return MeasurementSet.load(rest)
        if head == "mub":
            return mub_pair(int(rest))
        if head == "theta":
            return qubit_theta_pair(float(rest))
        if head == "qMUB":
            return qmub_pair(int(rest))
        if head == "dev":
            if rest != "3":
                raise InputError("dev is only defined for d = 3")
            return named_pair("dev3")
        if head == "primemubs":
            d, k = rest.split(":")
            return prime_mub_set(int(d), int(k))
        if not rest:
            return named_pair(head)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise InputError(f"cannot build {spec!r}: {exc}") from exc
    raise InputError(f"unknown construction {spec!r}")


def round_sig(obj, digits: int = DIGITS):
    """Round every float in a JSON-like structure to ``digits`` significant digits."""
    if isinstance(obj, float):
        if not math.isfinite(obj) or obj == 0.0:
            return obj
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_sig(v, digits) for v in obj]
    if isinstance(obj, np.generic):
        return round_sig(obj.item(), digits)
    return obj


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.{DIGITS}g}"
    return "" if v is None else str(v)


def _emit(payload, fmt: str, rows=None, columns=None, out=None):
    stream = out or sys.stdout
    if fmt == "csv" and rows is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        stream.write(buf.getvalue())
    else:
        stream.write(json.dumps(round_sig(payload), indent=2) + "\n")


def _kinds(measure: str):
    return list(ALL_KINDS) if measure == "all" else [NoiseModelKind.parse(measure)]


def _load_set(args) -> MeasurementSet:
    return parse_construction(args.pair)


def cmd_compute(args) -> int:
    s = _load_set(args)
    results = []
    for kind in _kinds(args.measure):
        try:
            r = solve_robustness(s, kind, tol=args.tol)
        except SolverFailure as exc:
            sol = exc.solution
            print(f"solver failure for {kind.value}: {exc}", file=sys.stderr)
            if sol is not None:
                print(f"  status={sol.status} primal_residual={sol.primal_residual:.3e} "
                      f"dual_residual={sol.dual_residual:.3e} gap={sol.gap:.3e}", file=sys.stderr)
            return EXIT_SOLVER
        entry = r.to_dict(full=args.full)
        entry["verified"] = verify_result(s, r).ok
        results.append(entry)
    payload = {"input": args.pair, "dim": s.dim, "outcome_counts": list(s.outcome_counts), "results": results}
    rows = [[e["measure"], e["eta"], e["dual_bound"], e["gap"], e["status"], e["verified"]] for e in results]
    _emit(payload, args.format, rows, ["measure", "eta", "dual_bound", "gap", "status", "verified"])
    return 0


def cmd_bounds(args) -> int:
    s = _load_set(args)
    kinds = None if args.measure == "all" else [args.measure]
    rep = bounds.bound_report(s, kinds)
    payload = {"input": args.pair, **rep.to_dict()}
    rows = [[e.measure, e.side, e.value, e.source] for e in rep.entries]
    _emit(payload, args.format, rows, ["measure", "side", "value", "source"])
    return 0


def cmd_search(args) -> int:
    counts = tuple(args.outcomes) if args.outcomes else None
    measures = [k.value for k in _kinds(args.measure)]
    cfg = SearchConfig(
        d=args.d, outcome_counts=counts, k=args.k, measures=tuple(measures), samples=args.samples,
        seed=args.seed, restriction=args.restriction, include=tuple(args.include or ()),
        include_random=args.include_random, tol=args.tol, checkpoint=args.checkpoint, workers=args.workers,
    )
    rec = estimate_chi(cfg)
    payload = rec.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(round_sig(payload), indent=2))
    rows = [[m, v, rec.best_index[m]] for m, v in rec.best_eta.items()]
    if args.format == "json":
        payload = {k: v for k, v in payload.items() if k != "best_set"}
    _emit(payload, args.format, rows, ["measure", "best_eta", "sample_index"])
    return 0


def cmd_reproduce(args) -> int:
    targets = repro.TARGETS if args.target == "all" else [args.target]
    status = 0
    for t in targets:
        res = repro.run_target(t, out_dir=args.out)
        if res.passed:
            print(f"PASS {t}")
        else:
            print(res.summary())
            status = EXIT_MISMATCH
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="incompat", description="Noise robustness of measurement incompatibility.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    measures = [k.value for k in ALL_KINDS] + ["all"]

    c = sub.add_parser("compute", help="solve the robustness SDPs for a measurement set")
    c.add_argument("--pair", "--set", dest="pair", required=True, help="named construction or file:<path>")
    c.add_argument("--measure", choices=measures, default="all")
    c.add_argument("--tol", type=float, default=1e-9)
    c.add_argument("--format", choices=["json", "csv"], default="json")
    c.add_argument("--full", action="store_true", help="include parent POVM, noise and dual point")
    c.set_defaults(func=cmd_compute)

    b = sub.add_parser("bounds", help="analytic lower and upper bounds")
    b.add_argument("--pair", "--set", dest="pair", required=True)
    b.add_argument("--measure", choices=measures, default="all")
    b.add_argument("--format", choices=["json", "csv"], default="json")
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("search", help="random search for the least robust sets")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--outcomes", type=int, nargs="+")
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--measure", choices=measures, default="all")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--restriction", choices=RESTRICTIONS, default="rank-one-projective")
    s.add_argument("--include", nargs="*", help="named pairs evaluated before sampling")
    s.add_argument("--include-random", action="store_true", help="also search the random-noise measure")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--checkpoint")
    s.add_argument("--workers", type=int)
    s.add_argument("--out")
    s.add_argument("--format", choices=["json", "csv"], default="json")
    s.set_defaults(func=cmd_search)

    r = sub.add_parser("reproduce", help="recompute reference values")
    r.add_argument("target", choices=list(repro.TARGETS) + ["all"])
    r.add_argument("--out")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InputError, PovmError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
