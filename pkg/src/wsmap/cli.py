"""Command-line interface: run experiments, check reports, print tables,
and re-measure calibration constants."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import Report, WorkloadSpec, render_table, run_experiment


def _cmd_run(args):
    spec = WorkloadSpec.from_json(Path(args.workload).read_text())
    if args.seed is not None:
        spec.seed = args.seed
    if args.p is not None:
        spec.p = args.p
    report = run_experiment(spec, args.structure, scheduler=args.scheduler)
    out = Path(args.out)
    out.write_text(report.to_json() + "\n")
    failed = report.failed()
    print(f"{args.structure}: {len(report.lines) - len(failed)}/"
          f"{len(report.lines)} lines passed -> {out}")
    return 1 if failed else 0


def _cmd_check(args):
    report = Report.from_json(Path(args.report).read_text())
    failed = report.failed()
    for line in report.lines:
        status = "ok" if line["passed"] else "FAIL"
        print(f"{status:4} {line['name']}")
    return 1 if failed else 0


def _cmd_table(args):
    report = Report.from_json(Path(args.report).read_text())
    print(render_table(report))
    return 0


def _cmd_calibrate(args):
    from .calibrate import measure_constants
    values = measure_constants(verbose=True)
    text = json.dumps(values, indent=2, sort_keys=True) + "\n"
    if args.write:
        target = Path(__file__).with_name("calibration.json")
        target.write_text(text)
        print(f"wrote {target}")
    else:
        print(text)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="wsmap",
        description="working-set map simulator benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a workload on a structure")
    p_run.add_argument("--structure", required=True,
                       choices=["m0", "m1", "m2", "oracle"])
    p_run.add_argument("--workload", required=True,
                       help="workload spec JSON file")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--p", type=int, default=None)
    p_run.add_argument("--scheduler", default=None,
                       choices=["greedy", "weak_priority"])
    p_run.add_argument("--out", required=True, help="report JSON output path")
    p_run.set_defaults(fn=_cmd_run)

    p_check = sub.add_parser("check", help="validate a report's lines")
    p_check.add_argument("--report", required=True)
    p_check.set_defaults(fn=_cmd_check)

    p_table = sub.add_parser("table", help="print a report as a table")
    p_table.add_argument("--report", required=True)
    p_table.set_defaults(fn=_cmd_table)

    p_cal = sub.add_parser("calibrate",
                           help="re-measure calibration constants")
    p_cal.add_argument("--write", action="store_true",
                       help="overwrite the frozen calibration file")
    p_cal.set_defaults(fn=_cmd_calibrate)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
