"""``agreement-lab`` command line.

Exit status: 0 success, 1 a check or audit failed, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .analysis import AUDIT_COLUMNS, audit_agreement_accuracy
from .corpus import KINDS as CORPUS_KINDS
from .corpus import GeneratorSpec
from .divergence import get_generator
from .errors import AgreementLabError
from .metrics import METRIC_COLUMNS, accuracy_profile, agreement_profile, metrics_row
from .protocol import KINDS as PROTOCOL_KINDS
from .protocol import T_END_OBJECTIVES, run_protocol
from .structure import load_structure, structure_to_json
from .substitutes import DEFAULT_TOL, delta_estimate, rectangle_check
from .verification import run_suite, summary_ok

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
THREADS_ENV = "AGREEMENT_LAB_THREADS"


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}") from None


def _seed_list(text: str) -> list[int]:
    """'0-9', '1,4,7' or a mix such as '0-2,10'."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not out or min(out) < 0:
        raise argparse.ArgumentTypeError(f"seed list must be non-empty and non-negative: {text!r}")
    return sorted(set(out))


def _emit(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _stamp(doc: dict, args) -> dict:
    if not args.no_timestamp:
        doc["generatedAt"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return doc


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise AgreementLabError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise AgreementLabError(f"{THREADS_ENV} must be >= 1")
    return n


# -- subcommands ---------------------------------------------------------------

def cmd_gen(args) -> int:
    g = get_generator(args.g)
    s = GeneratorSpec(args.kind, args.rows, args.cols, args.seed, args.mix_weight).build(g)
    _emit(structure_to_json(s) + "\n", args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    g = get_generator(args.g)
    s = load_structure(args.structure)
    t = run_protocol(s, args.protocol, args.epsilon, g, args.max_rounds, args.t_end_objective)
    doc = t.to_dict()
    doc["structure"] = s.label
    doc["simulatedRounds"] = t.simulated_rounds
    doc["stoppedEarly"] = t.stopped_early
    _emit(_dump(_stamp(doc, args)), args.out)
    if args.trace_csv:
        Path(args.trace_csv).write_text(t.trace_csv())
    if args.metrics_csv:
        rows = []
        for k in range(t.t_end + 1):
            part = t.partition_at(k)
            rows.append(metrics_row(k, agreement_profile(s, part, g), accuracy_profile(s, part, g)))
        Path(args.metrics_csv).write_text(_csv(METRIC_COLUMNS, rows))
    return EXIT_OK


def cmd_check(args) -> int:
    g = get_generator(args.g)
    s = load_structure(args.structure)
    rep = rectangle_check(s, g, args.mode, args.tol, allow_large=args.allow_large)
    doc = {"structure": s.label, "generator": g.name, **rep.to_dict()}
    if args.delta:
        est = delta_estimate(s, g, allow_large=args.allow_large)
        doc["deltaLowerBound"] = est.lower_bound
        doc["deltaExact"] = est.exact
        doc["partitionsEnumerated"] = est.partitions_enumerated
    _emit(_dump(_stamp(doc, args)), args.out)
    return EXIT_OK if rep.holds else EXIT_FAIL


def _audit_failed(r) -> bool:
    return r.applicable and (not r.satisfied or bool(r.continued_violations))


def cmd_audit(args) -> int:
    g = get_generator(args.g)
    reports = []
    for path in args.structure:
        s = load_structure(path)
        for eps in args.epsilon:
            reports.append(audit_agreement_accuracy(
                s, g, args.protocol, eps, c=args.c, max_rounds=args.max_rounds, delta=args.delta,
                t_end_objective=args.t_end_objective))
    rows = [r.csv_row() + [";".join(map(str, r.continued_violations))] for r in reports]
    _emit(_csv(AUDIT_COLUMNS + ("continuedViolations",), rows), args.out)
    return EXIT_FAIL if any(_audit_failed(r) for r in reports) else EXIT_OK


SWEEP_COLUMNS = ("seed",) + AUDIT_COLUMNS + ("applicable", "continuedViolations")


def _sweep_cell(kind, rows, cols, seed, g, protocols, epsilons, max_rounds, delta):
    s = GeneratorSpec(kind, rows, cols, seed).build(g)
    out = []
    for proto in protocols:
        for eps in epsilons:
            r = audit_agreement_accuracy(s, g, proto, eps, max_rounds=max_rounds, delta=delta)
            out.append((r, [str(seed)] + r.csv_row() + [
                "true" if r.applicable else "false", ";".join(map(str, r.continued_violations))]))
    return out


def cmd_sweep(args) -> int:
    g = get_generator(args.g)
    for p in args.protocols:
        if p not in PROTOCOL_KINDS:
            raise AgreementLabError(f"unknown protocol {p!r}; expected one of {PROTOCOL_KINDS}")
    jobs = [(args.kind, args.rows, args.cols, seed, g, args.protocols, args.epsilons, args.max_rounds, args.delta)
            for seed in args.seeds]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = [cell for chunk in pool.map(lambda j: _sweep_cell(*j), jobs) for cell in chunk]
    # rows sort by (seed, protocol, epsilon) whatever order the workers finished in
    results.sort(key=lambda rr: (int(rr[1][0]), rr[0].protocol, rr[0].epsilon_target))
    _emit(_csv(SWEEP_COLUMNS, [row for _, row in results]), args.out)
    return EXIT_FAIL if any(_audit_failed(r) for r, _ in results) else EXIT_OK


def cmd_verify(args) -> int:
    results = run_suite()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    ok = summary_ok(results)
    print("all checks passed" if ok else "verification FAILED")
    return EXIT_OK if ok else EXIT_FAIL


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--no-timestamp", action="store_true", help="omit the generatedAt field from JSON output")

    parser = argparse.ArgumentParser(prog="agreement-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a structure JSON file")
    p.add_argument("--kind", choices=CORPUS_KINDS, required=True)
    p.add_argument("--rows", type=_positive_int, default=4)
    p.add_argument("--cols", type=_positive_int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--g", default="squared", help="generator used to certify substitutes kinds")
    p.add_argument("--mix-weight", type=float, default=None, help="fixed blend weight instead of a certified search")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", parents=[common], help="simulate a protocol and write its transcript")
    p.add_argument("--structure", required=True)
    p.add_argument("--protocol", choices=PROTOCOL_KINDS, required=True)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--g", default="squared")
    p.add_argument("--max-rounds", type=_positive_int, default=1000)
    p.add_argument("--t-end-objective", choices=T_END_OBJECTIVES, default="divergence",
                   help="disc-bregman stopping rule: argmin of E[D(a||b)] or of E[JB(a,b)]")
    p.add_argument("--out", default=None)
    p.add_argument("--trace-csv", default=None)
    p.add_argument("--metrics-csv", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", parents=[common], help="test weak or rectangle substitutes")
    p.add_argument("--structure", required=True)
    p.add_argument("--g", default="squared")
    p.add_argument("--mode", choices=("weak", "rectangle"), default="rectangle")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--delta", action="store_true", help="also report the approximate-substitutes delta")
    p.add_argument("--allow-large", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("audit", parents=[common], help="check agreement-implies-accuracy bounds")
    p.add_argument("--structure", required=True, action="append", help="repeatable")
    p.add_argument("--protocol", choices=PROTOCOL_KINDS, required=True)
    p.add_argument("--epsilon", type=_float_list, default=[0.05], help="comma-separated")
    p.add_argument("--g", default="squared")
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--delta", choices=("lower", "exact"), default=None)
    p.add_argument("--max-rounds", type=_positive_int, default=1000)
    p.add_argument("--t-end-objective", choices=T_END_OBJECTIVES, default="divergence")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", parents=[common], help="audit seeds x epsilons x protocols into one CSV")
    p.add_argument("--kind", choices=CORPUS_KINDS, default="substitutes")
    p.add_argument("--rows", type=_positive_int, default=4)
    p.add_argument("--cols", type=_positive_int, default=4)
    p.add_argument("--seeds", type=_seed_list, default=[0])
    p.add_argument("--epsilons", type=_float_list, default=[0.1, 0.05])
    p.add_argument("--protocols", type=lambda t: [x for x in t.split(",") if x], default=["disc-quad"])
    p.add_argument("--g", default="squared")
    p.add_argument("--delta", choices=("lower", "exact"), default=None)
    p.add_argument("--max-rounds", type=_positive_int, default=1000)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="run the built-in invariant suite")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports bad flags with status 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (AgreementLabError, OSError, json.JSONDecodeError) as exc:
        print(f"agreement-lab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
