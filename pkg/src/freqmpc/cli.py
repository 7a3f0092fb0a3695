"""Command-line entry point: ``freqmpc run|report|validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness import GridMismatchError, RunError, ScenarioError, load_run, load_scenario, report, run, write_run
from .netcase import CaseFormatError, CaseValidationError, load_case
from .partition import PartitionError, load_partition, validate_partition
from .steady_state import equilibrium

log = logging.getLogger("freqmpc")


def _cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    out = Path(args.out) if args.out else Path("runs") / sc.name
    every = max(1, int(args.progress)) if args.progress else 0

    def progress(k, K):
        if every and k % every == 0:
            log.info("step %d / %d", k, K)

    result = run(sc, dump_dir=out / "dumps", progress=progress if every else None)
    write_run(result, out)
    print((out / "summary.txt").read_text(encoding="utf-8"), end="")
    print(f"wrote {out / 'trace.csv'}")
    return 0


def _cmd_report(args) -> int:
    logs = [load_run(p) for p in args.logs]
    text = report(logs, args.out)
    print(text, end="")
    return 0


def _cmd_validate(args) -> int:
    case = load_case(args.case)
    eq = equilibrium(case)
    print(f"case {case.name}: n = {case.n}, m = {case.m}, inertial = {int(case.inertial.sum())}, "
          f"N = {case.config.horizon}, T = {case.config.period}")
    print(f"sync frequency {eq.sync_freq:.12g}, condition value {eq.condition_value:.12g}, "
          f"r_bar {eq.r_bar:.12g}")
    status = 0
    if args.partition:
        part = load_partition(args.partition, case)
        rep = validate_partition(case, part)
        if rep.valid:
            print(f"partition valid: {len(part)} regions")
        else:
            for msg in rep.problems:
                print(f"partition problem: {msg}")
            print(f"offending buses: {rep.offending_buses}")
            status = 1
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freqmpc", description="Transient-frequency MPC toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="simulate a closed-loop scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", help="output directory (default runs/<scenario name>)")
    p.add_argument("--progress", type=int, default=0, help="log every this many steps")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("report", help="tabulate one or more runs")
    p.add_argument("--logs", nargs="+", required=True, help="run directories or their trace.csv files")
    p.add_argument("--out", help="also write the table to this file")
    p.set_defaults(func=_cmd_report)
    p = sub.add_parser("validate", help="check a case and optionally a partition")
    p.add_argument("--case", required=True)
    p.add_argument("--partition")
    p.set_defaults(func=_cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ScenarioError, CaseFormatError, CaseValidationError, PartitionError, GridMismatchError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RunError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
