"""Seeded replication batches, canned sweeps and summary output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .control import make_strategy
from .engine import ReplicationResult, run_replication
from .fixtures import ACTION_SETS, CONTROL_POINT_SETS
from .metrics import SUMMARY_FIELDS, ReplicationMetrics, aggregate, replication_metrics
from .scenario import Scenario

log = logging.getLogger(__name__)

DEFAULT_REPS = 50
PASSENGER_SD_POOLING = "pooled within each replication, then averaged across replications"


@dataclass(frozen=True)
class Cell:
    """One experiment configuration, replicated ``reps`` times."""

    label: str
    strategy: str
    stages: int = 3
    gamma: float | None = None
    action_set: tuple[float, ...] | None = None
    control_stops: tuple[int, ...] | None = None
    reps: int = DEFAULT_REPS
    master_seed: int = 0

    def apply(self, scenario: Scenario) -> Scenario:
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        return scenario.with_control(strategy=self.strategy, stages=self.stages, gamma=self.gamma,
                                     action_set=self.action_set, control_stops=self.control_stops)


@dataclass
class CellResult:
    cell: Cell
    row: dict
    replications: list[ReplicationMetrics]
    trajectories: list[str] = field(default_factory=list)
    decisions: list[str] = field(default_factory=list)


def decisions_tsv(result: ReplicationResult) -> str:
    out = io.StringIO()
    out.write("time_s\tbus_id\tstop_id\tholding_s\tsigma_H\tcandidate_costs\n")
    for c in result.ctps:
        costs = getattr(c.record, "costs", None) or {}
        cost_txt = ";".join(f"{a!r}:{v!r}" for a, v in costs.items())
        out.write(f"{c.time_s!r}\t{c.bus_id}\t{c.stop_id}\t{c.holding_s!r}\t{c.snapshot.sigma!r}\t{cost_txt}\n")
    return out.getvalue()


def _replicate(args):
    scenario, seed, k, keep_outputs = args
    result = run_replication(scenario, make_strategy, seed=seed, replication=k)
    metrics = replication_metrics(result, scenario)
    if keep_outputs:
        return metrics, result.log.trajectory_tsv(), decisions_tsv(result)
    return metrics, None, None


def run_cell(scenario: Scenario, cell: Cell, parallel: int = 1, keep_outputs: bool = False) -> CellResult:
    """Run every replication of ``cell``; results are ordered by replication index."""
    sc = cell.apply(scenario)
    jobs = [(sc, cell.master_seed, k, keep_outputs) for k in range(cell.reps)]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            outs = list(pool.map(_replicate, jobs))
    else:
        outs = [_replicate(j) for j in jobs]
    reps = [o[0] for o in outs]
    row = aggregate(reps, cell.strategy, cell.stages if cell.strategy == "nsla" else None)
    row["strategy"] = cell.label
    log.info("%s: c_H=%.2f bunch=%.2f", cell.label, row["c_H"], row["bunch_fraction"])
    res = CellResult(cell, row, reps)
    if keep_outputs:
        res.trajectories = [o[1] for o in outs]
        res.decisions = [o[2] for o in outs]
    return res


# -- canned sweeps -----------------------------------------------------------

TABLES = ("table6", "table8", "table11")


def table_cells(name: str, reps: int = DEFAULT_REPS, seed: int = 0) -> list[Cell]:
    if name == "table6":
        cells = [Cell("NoControl", "none", reps=reps, master_seed=seed),
                 Cell("TSHS", "tshs", reps=reps, master_seed=seed)]
        cells += [Cell(f"{n}SLA", "nsla", stages=n, reps=reps, master_seed=seed) for n in range(1, 6)]
        return cells
    if name == "table8":
        return [Cell(f"set{k}", "nsla", stages=3, action_set=tuple(float(a) for a in v),
                     reps=reps, master_seed=seed) for k, v in ACTION_SETS.items()]
    if name == "table11":
        return [Cell(k, "nsla", stages=3, control_stops=v, reps=reps, master_seed=seed)
                for k, v in CONTROL_POINT_SETS.items()]
    raise ValueError(f"unknown table {name!r}; choose from {TABLES}")


# -- output ------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def summary_csv(rows: Sequence[dict], include_timing: bool = True) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in rows:
        w.writerow(["" if (not include_timing and k in ("sim_s_per_rep", "decision_s_mean"))
                    else _fmt(r[k]) for k in SUMMARY_FIELDS])
    return out.getvalue()


def summary_json(rows: Sequence[dict], include_timing: bool = True, **metadata) -> str:
    clean = []
    for r in rows:
        d = {k: r[k] for k in SUMMARY_FIELDS}
        if not include_timing:
            d["sim_s_per_rep"] = d["decision_s_mean"] = None
        clean.append(d)
    meta = {"passenger_sd": PASSENGER_SD_POOLING, **metadata}
    return json.dumps({"rows": clean, "metadata": meta}, indent=2, sort_keys=False) + "\n"


def format_table(rows: Sequence[dict]) -> str:
    cols = ("strategy", "c_H", "sigma_c", "n_T", "a_sum", "a_mean", "a_sd", "bunch_fraction",
            "n_P", "W_mean", "R_mean", "Tr_mean")
    lines = ["  ".join(f"{c:>10}" for c in cols)]
    for r in rows:
        cells = []
        for c in cols:
            v = r[c]
            cells.append(f"{v:>10.2f}" if isinstance(v, float) else f"{'' if v is None else v:>10}")
        lines.append("  ".join(cells))
    return "\n".join(lines)


def write_outputs(out_dir: Path, results: Sequence[CellResult], include_timing: bool = True,
                  **metadata) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r.row for r in results]
    (out_dir / "summary.csv").write_text(summary_csv(rows, include_timing), encoding="utf-8")
    (out_dir / "summary.json").write_text(summary_json(rows, include_timing, **metadata),
                                          encoding="utf-8")
    for res in results:
        for k, (traj, dec) in enumerate(zip(res.trajectories, res.decisions)):
            stem = f"{res.cell.label}_rep{k:03d}"
            (out_dir / f"{stem}_trajectory.tsv").write_text(traj, encoding="utf-8")
            (out_dir / f"{stem}_decisions.tsv").write_text(dec, encoding="utf-8")


def default_out_dir() -> Path:
    return Path(os.environ.get("HOLDSIM_OUT", "holdsim-out"))
