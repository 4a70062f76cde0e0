"""Command-line front end: ``holdsim run | table | timing``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .control import make_strategy
from .engine import run_replication
from .experiment import (DEFAULT_REPS, TABLES, Cell, default_out_dir, format_table, run_cell,
                         table_cells, write_outputs)
from .scenario import STRATEGIES, ScenarioError, load_scenario


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v < 1:
            raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
        return v
    return parse


def _stops(text):
    return tuple(int(s) for s in text.split(",") if s.strip())


def _times(text):
    return tuple(float(s) for s in text.split(",") if s.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holdsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="builtin:he2019",
                        help="scenario YAML/JSON path or builtin:<name>")
    common.add_argument("--reps", type=_positive(int), default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=None,
                        help="output directory (default $HOLDSIM_OUT or ./holdsim-out)")
    common.add_argument("--parallel", type=_positive(int), default=1)
    common.add_argument("--omit-timing", action="store_true",
                        help="leave wall-clock columns empty so outputs are byte-reproducible")

    run = sub.add_parser("run", parents=[common], help="replicate one configuration")
    run.add_argument("--strategy", choices=STRATEGIES, required=True)
    run.add_argument("--stages", type=int, default=None)
    run.add_argument("--gamma", type=float, default=None)
    run.add_argument("--action-set", type=_times, default=None, help="e.g. 0,2,4,6,8,10")
    run.add_argument("--control-stops", type=_stops, default=None, help="e.g. 11,16,25")
    run.add_argument("--trajectories", action="store_true",
                     help="write per-replication trajectory and decision logs")

    tab = sub.add_parser("table", parents=[common], help="canned sweep")
    tab.add_argument("name", choices=TABLES)

    tim = sub.add_parser("timing", help="wall-clock per replication and per decision vs stages")
    tim.add_argument("--scenario", default="builtin:he2019")
    tim.add_argument("--stages", default="1-5", help="range like 1-5 or a list like 1,3")
    tim.add_argument("--seed", type=int, default=0)
    return p


def _stage_range(text: str) -> list[int]:
    if "-" in text:
        lo, hi = text.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",")]


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    stages = args.stages if args.stages is not None else scenario.control.stages
    if stages < 1:
        raise ScenarioError("stages must be >= 1", "--stages")
    label = f"{stages}SLA" if args.strategy == "nsla" else {"none": "NoControl", "tshs": "TSHS"}[args.strategy]
    cell = Cell(label, args.strategy, stages=stages, gamma=args.gamma, action_set=args.action_set,
                control_stops=args.control_stops, reps=args.reps or 1, master_seed=args.seed)
    res = run_cell(scenario, cell, parallel=args.parallel, keep_outputs=args.trajectories)
    out = args.out or default_out_dir()
    write_outputs(out, [res], include_timing=not args.omit_timing, seed=args.seed,
                  reps=cell.reps, scenario=str(args.scenario))
    print(format_table([res.row]))
    print(f"wrote {out}/summary.csv")
    return 0


def cmd_table(args) -> int:
    scenario = load_scenario(args.scenario)
    cells = table_cells(args.name, reps=args.reps or DEFAULT_REPS, seed=args.seed)
    results = [run_cell(scenario, c, parallel=args.parallel) for c in cells]
    out = args.out or default_out_dir() / args.name
    write_outputs(out, results, include_timing=not args.omit_timing, table=args.name,
                  seed=args.seed, reps=cells[0].reps, scenario=str(args.scenario))
    print(format_table([r.row for r in results]))
    print(f"wrote {out}/summary.csv")
    return 0


def cmd_timing(args) -> int:
    scenario = load_scenario(args.scenario)
    print(f"{'stages':>6}  {'s/replication':>14}  {'s/decision':>12}")
    for n in _stage_range(args.stages):
        sc = scenario.with_control(strategy="nsla", stages=n)
        t0 = time.perf_counter()
        result = run_replication(sc, make_strategy, seed=args.seed)
        wall = time.perf_counter() - t0
        per = sum(c.decision_s for c in result.ctps) / max(len(result.ctps), 1)
        print(f"{n:>6}  {wall:>14.3f}  {per:>12.6f}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "table": cmd_table, "timing": cmd_timing}
    try:
        return handlers[args.command](args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"holdsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
