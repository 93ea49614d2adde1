"""Command-line interface.

Subcommands::

    beaconsim run <scenario.cfg> [--seed N] [--out metrics.csv] [--trace trace.csv]
    beaconsim analyze fig9 --r {4|10} [--out curves.csv]
    beaconsim optimal-tc --tm S --td S --pd W --prx W
    beaconsim validate <scenario.cfg>

Exit status 0 on success, 1 on runtime failures (diagnostic on stderr),
2 on bad flags or arguments.
"""

from __future__ import annotations

import argparse
import os
import sys

from ..analysis import figure9_curves, tradeoff_csv
from ..protocol import optimal_tc
from .experiments import run_scenario
from .metrics import metrics_to_csv
from .scenario import ScenarioError, load_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beaconsim",
        description="Batteryless beacon network simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario file")
    run_p.add_argument("scenario", help="scenario file path")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--out", default=None, help="write metrics CSV here")
    run_p.add_argument("--trace", default=None, help="write per-event trace CSV here")

    an_p = sub.add_parser("analyze", help="numeric tradeoff analyses")
    an_sub = an_p.add_subparsers(dest="analysis", required=True)
    fig9_p = an_sub.add_parser("fig9", help="two-wave accuracy/charging tradeoff curves")
    fig9_p.add_argument("--r", type=int, required=True, help="number of anchors (>= 2)")
    fig9_p.add_argument("--out", default=None, help="write curves CSV here")

    tc_p = sub.add_parser("optimal-tc", help="optimal ADC poll period")
    tc_p.add_argument("--tm", type=float, required=True, help="beacon period, s")
    tc_p.add_argument("--td", type=float, required=True, help="ADC measurement time, s")
    tc_p.add_argument("--pd", type=float, required=True, help="ADC power, W")
    tc_p.add_argument("--prx", type=float, required=True, help="receive power, W")

    val_p = sub.add_parser("validate", help="check a scenario file")
    val_p.add_argument("scenario", help="scenario file path")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "optimal-tc":
            print(f"{optimal_tc(args.tm, args.td, args.pd, args.prx):.9g}")
            return 0
        if args.command == "validate":
            load_scenario(args.scenario)
            print("ok")
            return 0
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


def _cmd_run(args) -> int:
    seed_env = os.environ.get("SEED")
    config = load_scenario(args.scenario)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    elif seed_env is not None:
        config = config.replace(seed=int(seed_env))
    if args.trace is not None:
        config = config.replace(trace=True)
    run = run_scenario(config)
    csv_text = metrics_to_csv(run.metrics)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv_text)
    sys.stdout.write(csv_text)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("time_s,node,kind,detail\n")
            for time, node, kind, detail in run.trace:
                fh.write(f"{time:.12g},{node},{kind},{detail}\n")
            for node in sorted(run.energy):
                for key in sorted(run.energy[node]):
                    fh.write(
                        f"{0.0:.12g},{node},energy,{key}={run.energy[node][key]:.17g}\n"
                    )
    return 0


def _cmd_analyze(args) -> int:
    points = figure9_curves(args.r)
    text = tradeoff_csv(points)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
