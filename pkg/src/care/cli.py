"""Command-line entry point: ``care run|gen|oracle|verify|bench|pea-trace``.

stdout carries only the requested artifact (JSON or CSV); logs go to stderr
with the level taken from ``CARE_LOG``. Exit codes: 0 success, 1 property
violation found by ``verify``, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .care_co import run_care_co
from .care_no import partition_buckets, run_care_no
from .harness import MECHANISMS, SWEEPS, GeneratorParams, corpus_instance, generate_instance, run_experiment
from .model import InstanceError, Instance, dumps, instance_to_dict, parse_instance, serialize_instance, validate
from .oracle import PROPERTIES, EnumerationBoundExceeded, check_property, opt_cooperative, opt_noncooperative
from .pea import pea_trace

log = logging.getLogger("care")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _setup_logging() -> str:
    level = os.environ.get("CARE_LOG", "WARNING").upper()
    if level not in ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"):
        level = "WARNING"
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
    return level


def _load_instance(path: Path) -> Instance:
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        inst = parse_instance(text)
    except InstanceError as exc:
        raise UsageError(f"invalid instance: {exc}") from None
    errors = [v for v in validate(inst) if v.severity == "error"]
    if errors:
        raise UsageError("invalid instance: " + ", ".join(str(v) for v in errors))
    return inst


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)
        log.info("wrote %s", out)


# -- subcommands -------------------------------------------------------------------

def cmd_run(args) -> int:
    inst = _load_instance(args.instance)
    if args.mode == "co":
        if args.expectation or args.seed is not None:
            raise UsageError("--seed and --expectation apply to --mode no only")
        doc = run_care_co(inst).to_dict()
    elif args.expectation:
        doc = run_care_no(inst, mode="expectation", payment_mode=args.payment).to_dict()
    else:
        doc = run_care_no(inst, mode="sampled", seed=args.seed, payment_mode=args.payment).to_dict()
    _emit(dumps(doc), args.out)
    return EXIT_OK


def _read_params(path: Optional[Path]) -> GeneratorParams:
    if path is None:
        return GeneratorParams()
    try:
        return GeneratorParams.from_dict(json.loads(path.read_text()))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError, InstanceError) as exc:
        raise UsageError(f"invalid params: {exc}") from None


def cmd_gen(args) -> int:
    params = _read_params(args.params)
    overrides = {k: v for k, v in (("n_workers", args.workers), ("n_requesters", args.requesters),
                                   ("n_groups", args.groups)) if v is not None}
    if overrides:
        try:
            params = replace(params, **overrides)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    _emit(serialize_instance(generate_instance(params, args.seed)), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = _load_instance(args.instance)
    solve = opt_cooperative if args.setting == "co" else opt_noncooperative
    try:
        res = solve(inst, max_n=args.max_n, max_m=args.max_m)
    except EnumerationBoundExceeded as exc:
        raise UsageError(str(exc)) from None
    doc = {
        "setting": args.setting,
        "value": res.value,
        "cost_paid": res.cost_paid,
        "assignment": [[i, j] for i, j in res.assignment.sorted_pairs()],
    }
    _emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    for t in range(args.trials):
        inst = corpus_instance(args.property, args.seed, t)
        problems = check_property(args.property, inst, payment_mode=args.payment)
        if problems:
            log.error("%s violated on trial %d", args.property, t)
            doc = {"property": args.property, "seed": args.seed, "trial": t,
                   "problems": problems, "instance": instance_to_dict(inst)}
            sys.stdout.write(dumps(doc))
            return EXIT_VIOLATION
    log.info("%s held on %d trials", args.property, args.trials)
    return EXIT_OK


def cmd_bench(args) -> int:
    mechanisms = tuple(args.mechanisms.split(","))
    unknown = [m for m in mechanisms if m not in MECHANISMS]
    if unknown:
        raise UsageError(f"unknown mechanism(s): {', '.join(unknown)}")
    params = _read_params(args.params)
    axes = list(SWEEPS) if args.sweep == "both" else [args.sweep]
    seeds = tuple(range(args.seed, args.seed + args.trials))
    reports = [run_experiment(a, params, mechanisms, seeds, jobs=args.jobs, timing=args.timing) for a in axes]
    csv_text = reports[0].to_csv() + "".join(r.to_csv().split("\n", 1)[1] for r in reports[1:])
    _emit(csv_text, args.out)
    if args.json is not None:
        args.json.write_text(dumps([json.loads(r.to_json()) for r in reports]))
    problems = [p for r in reports for p in r.problems()]
    for p in problems:
        log.error("budget or assignment violation: %s", p)
    for r in reports:
        for e in r.errors:
            log.error("failed point: %s", e)
    return EXIT_VIOLATION if problems else EXIT_OK


def cmd_pea_trace(args) -> int:
    inst = _load_instance(args.instance)
    workers = inst.workers
    if args.bucket is not None:
        part = partition_buckets(inst)
        if not 1 <= args.bucket <= part.gamma:
            raise UsageError(f"bucket must lie in 1..{part.gamma}")
        ids = set(part.buckets[args.bucket - 1])
        workers = tuple(w for w in inst.workers if w.id in ids)
    _emit(dumps(pea_trace(workers, inst.requesters, inst.tau).to_dict()), args.out)
    return EXIT_OK


# -- parser --------------------------------------------------------------------------

def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _pos_int(text: str) -> int:
    value = _nonneg_int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="care", description="Compatibility-aware budget-feasible mechanisms.")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="COMMAND")

    p = sub.add_parser("run", help="run CARE-CO or CARE-NO on an instance")
    p.add_argument("--mode", choices=("co", "no"), required=True, help="cooperative (co) or non-cooperative (no)")
    p.add_argument("--instance", type=Path, required=True, help="instance JSON file")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seed", type=_nonneg_int, help="bucket sampling seed for --mode no (default: instance seed)")
    g.add_argument("--expectation", action="store_true", help="--mode no: report every bucket and the expectation")
    p.add_argument("--payment", choices=("fast", "literal"), default="fast",
                   help="payment computation for --mode no (identical results)")
    p.add_argument("--out", type=Path, help="write the outcome here instead of stdout")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen", help="generate a synthetic instance")
    p.add_argument("--params", type=Path, help="generator parameter JSON (defaults: 120 workers, 5 requesters, 10 groups)")
    p.add_argument("--seed", type=_nonneg_int, required=True, help="generation seed")
    p.add_argument("--workers", type=_pos_int, help="override the number of workers")
    p.add_argument("--requesters", type=_pos_int, help="override the number of requesters")
    p.add_argument("--groups", type=_pos_int, help="override the number of groups")
    p.add_argument("--out", type=Path, help="write the instance here instead of stdout")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("oracle", help="exhaustive optimum for a small instance")
    p.add_argument("--instance", type=Path, required=True, help="instance JSON file")
    p.add_argument("--setting", choices=("co", "no"), required=True, help="pooled (co) or per-requester (no) budgets")
    p.add_argument("--max-n", type=_pos_int, default=10, help="enumeration bound on workers (default 10)")
    p.add_argument("--max-m", type=_pos_int, default=4, help="enumeration bound on requesters (default 4)")
    p.add_argument("--out", type=Path, help="write the result here instead of stdout")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("verify", help="check a property on a seeded random corpus")
    p.add_argument("--property", choices=PROPERTIES, required=True, help="property to check")
    p.add_argument("--trials", type=_pos_int, required=True, help="number of random instances")
    p.add_argument("--seed", type=_nonneg_int, required=True, help="corpus seed")
    p.add_argument("--payment", choices=("fast", "literal"), default="fast", help="payment computation for PEA")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="run the mechanism comparison sweep")
    p.add_argument("--sweep", choices=(*SWEEPS, "both"), required=True, help="sweep axis")
    p.add_argument("--trials", type=_pos_int, default=10, help="seeds per sweep point (default 10)")
    p.add_argument("--seed", type=_nonneg_int, default=1, help="first seed (default 1)")
    p.add_argument("--mechanisms", default=",".join(MECHANISMS),
                   help=f"comma-separated subset of {','.join(MECHANISMS)}")
    p.add_argument("--params", type=Path, help="generator parameter JSON")
    p.add_argument("--jobs", type=_pos_int, default=1, help="worker processes (default 1)")
    p.add_argument("--timing", action="store_true", help="fill runtime_ms (output is then not reproducible)")
    p.add_argument("--out", type=Path, help="write the CSV here instead of stdout")
    p.add_argument("--json", type=Path, help="also write the full JSON report here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pea-trace", help="dump the price table and payment sets of PEA")
    p.add_argument("--instance", type=Path, required=True, help="instance JSON file")
    p.add_argument("--bucket", type=_pos_int, help="restrict to one reputation bucket")
    p.add_argument("--out", type=Path, help="write the trace here instead of stdout")
    p.set_defaults(func=cmd_pea_trace)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"care {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
