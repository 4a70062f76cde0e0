"""End-to-end acceptance checks on the 30-stop fixture.

Each test records one PASS/FAIL line (printed in the terminal summary) and then
asserts. Replication count defaults to 20 and can be raised with
``HOLDSIM_ACCEPT_REPS``; sweeps use ``os.cpu_count()`` workers.
"""

import math
import os
import random
import time
from dataclasses import replace

import pytest

from conftest import ACCEPTANCE_LINES
from holdsim.cli import main as cli_main
from holdsim.control import NoControl, decide_nsla, make_strategy
from holdsim.engine import Decision, run_replication
from holdsim.experiment import run_cell, table_cells
from holdsim.headway import headway_snapshot, progress_of
from test_control import oracle_decide, random_case

REPS = int(os.environ.get("HOLDSIM_ACCEPT_REPS", "20"))
WORKERS = os.cpu_count() or 1
PUBLISHED_ESH = 234.65

pytestmark = [pytest.mark.acceptance]


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] #{number} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def sweeps(line):
    cache = {}

    def get(name):
        if name not in cache:
            results = [run_cell(line, c, parallel=WORKERS) for c in table_cells(name, reps=REPS)]
            cache[name] = {r.cell.label: r for r in results}
        return cache[name]
    return get


def _c(rows, label):
    return rows[label].row["c_H"]


def test_01_expected_system_headway(line, vmap_esh):
    vm, esh = vmap_esh
    rel = abs(esh - PUBLISHED_ESH) / PUBLISHED_ESH
    identity = abs(vm.cycle_s - line.n_buses * esh)
    report(1, "ESH", rel <= 0.03 and identity < 1e-6,
           f"H~={esh:.3f} s ({100 * rel:.2f}% from {PUBLISHED_ESH}), |C - 9H~|={identity:.1e}")


@pytest.mark.slow
def test_02_strategy_ordering(sweeps):
    rows = sweeps("table6")
    c = {k: _c(rows, k) for k in rows}
    sla = [c[f"{n}SLA"] for n in range(1, 6)]
    chain = (c["NoControl"] > c["TSHS"] > c["1SLA"] >= c["2SLA"] >= c["3SLA"]
             and c["3SLA"] <= c["5SLA"])
    ratio = c["NoControl"] / max(sla)
    detail = ", ".join(f"{k}={v:.2f}" for k, v in c.items()) + f"; NoControl/max(SLA)={ratio:.2f}"
    report(2, f"c_H ordering over {REPS} reps", chain and ratio >= 5, detail)


@pytest.mark.slow
def test_03_bunching_flags(sweeps):
    rows = sweeps("table6")
    f = {k: rows[k].row["bunch_fraction"] for k in ("NoControl", "TSHS", "3SLA")}
    ok = f["NoControl"] >= 0.9 and f["TSHS"] <= 0.1 and f["3SLA"] <= 0.1
    report(3, "bunching fractions", ok, ", ".join(f"{k}={v:.2f}" for k, v in f.items()))


@pytest.mark.slow
def test_04_scale_counts(sweeps):
    row = sweeps("table6")["3SLA"].row
    ok = abs(row["n_T"] - 1695) <= 169.5 and abs(row["n_P"] - 13218) <= 1321.8
    report(4, "3SLA counts", ok, f"n_T={row['n_T']:.1f} (1695 +-10%), n_P={row['n_P']:.1f} (13218 +-10%)")


@pytest.mark.slow
def test_05_holding_consistency(line, sweeps):
    worst = 0.0
    for res in sweeps("table6").values():
        for m in res.replications:
            if m.n_T:
                worst = max(worst, abs(m.a_mean - m.a_sum / m.n_T))
    outside = 0
    for n in (1, 3):
        sc = line.with_control(strategy="nsla", stages=n)
        run = run_replication(sc, make_strategy, seed=99)
        outside += sum(c.holding_s not in sc.actions_at(c.stop_id) for c in run.ctps)
    report(5, "holding consistency", worst <= 1e-9 and outside == 0,
           f"max |a_mean - a_sum/n_T|={worst:.1e}, holds outside action set={outside}")


def test_06_lookahead_oracle():
    rng = random.Random(20190601)
    mismatches = cases = 0
    for k in range(200):
        model, state, stages, gamma = random_case(rng, dyadic=k % 2 == 0)
        a, record = decide_nsla(state, stages, gamma, model)
        oa, oc = oracle_decide(model, state, stages, gamma)
        same = a == oa and (oc is None and record.costs == {} or
                            oc is not None and math.isclose(record.costs[a], oc, rel_tol=1e-12,
                                                            abs_tol=1e-9))
        mismatches += not same
        cases += 1
    report(6, "look-ahead vs brute force", mismatches == 0, f"{cases} random states, {mismatches} mismatches")


class _HoldZero:
    name = "zero"
    continuous = False

    def decide(self, state):
        return Decision(0.0)


@pytest.mark.slow
def test_07_degenerate_action_sets(line):
    zero_sets = line.with_control(strategy="nsla", stages=3, action_set=[0.0])
    differing = 0
    for seed in range(5):
        base = run_replication(line, NoControl(), seed=seed).log.to_tsv()
        nsla = run_replication(zero_sets, make_strategy, seed=seed).log.to_tsv()
        zero = run_replication(line, _HoldZero(), seed=seed).log.to_tsv()
        differing += (nsla != base) + (zero != base)
    report(7, "all-{0} nSLA and hold-0 equal NoControl", differing == 0,
           f"5 seeds, {differing} differing logs")


@pytest.mark.slow
def test_08_headway_geometry(line):
    hold = 4.0
    worst_sum = worst_shift = 0.0
    checked = 0
    for seed, strategy in enumerate(("none", "tshs", "nsla", "nsla", "none")):
        sc = line.with_control(strategy=strategy)
        res = run_replication(sc, make_strategy, seed=seed)
        vm = res.vmap
        for c in res.ctps:
            h = c.snapshot.headways
            worst_sum = max(worst_sum, abs(math.fsum(h) - vm.cycle_s))
            st = c.state
            b = st.trigger_bus
            pos = [progress_of(e, td, vm) for e, td in zip(st.target_stop, st.time_to_activation_s)]
            # follower: the bus whose gap ends at the trigger bus
            f = min((j for j in range(len(h)) if j != b),
                    key=lambda j: abs(math.remainder(pos[j] + h[j] - pos[b], vm.cycle_s)))
            if h[f] <= hold:
                continue
            tds = list(st.time_to_activation_s)
            tds[b] += hold
            moved = headway_snapshot(replace(st, time_to_activation_s=tuple(tds)), vm).headways
            expect = [x + hold if j == b else x - hold if j == f else x for j, x in enumerate(h)]
            worst_shift = max(worst_shift, max(abs(x - y) for x, y in zip(moved, expect)))
            checked += 1
    ok = worst_sum < 1e-6 and worst_shift < 1e-6 and checked > 1000
    report(8, "headway geometry", ok,
           f"max |sum h - C|={worst_sum:.1e}, max hold-shift error={worst_shift:.1e} over {checked} CTPs")


@pytest.mark.slow
def test_09_action_set_trends(sweeps):
    rows = sweeps("table8")
    s1, s2, s3 = rows["set1"].row, rows["set2"].row, rows["set3"].row
    ok = s2["c_H"] < s1["c_H"] and s2["a_mean"] > s1["a_mean"] and s3["bunch_fraction"] > 0
    report(9, "action-set trends", ok,
           f"set1 c_H={s1['c_H']:.2f} a={s1['a_mean']:.2f}; set2 c_H={s2['c_H']:.2f} "
           f"a={s2['a_mean']:.2f}; set3 bunch={s3['bunch_fraction']:.2f}")


@pytest.mark.slow
def test_10_control_point_trend(sweeps):
    rows = sweeps("table11")
    seq = [rows[k].row["c_H"] for k in ("11BS", "9BS", "7BS", "5BS", "3BS")]
    inversions = sum(b < a for a, b in zip(seq, seq[1:]))
    report(10, "control-point trend", inversions <= 1,
           "11BS..3BS c_H=" + ", ".join(f"{x:.2f}" for x in seq) + f"; inversions={inversions}")


@pytest.mark.slow
def test_11_parallel_determinism(tmp_path):
    outs = []
    for k in (1, 8):
        d = tmp_path / f"p{k}"
        cli_main(["run", "--strategy", "nsla", "--stages", "2", "--reps", "8", "--seed", "11",
                  "--parallel", str(k), "--trajectories", "--omit-timing", "--out", str(d)])
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    same = outs[0] == outs[1]
    report(11, "parallel 1 vs 8 byte-identical", same and len(outs[0]) == 2 + 2 * 8,
           f"{len(outs[0])} files compared")


@pytest.mark.slow
def test_12_timing_trend(line):
    times = []
    for n in range(1, 6):
        sc = line.with_control(strategy="nsla", stages=n)
        best = math.inf
        for _ in range(3 if n < 5 else 1):
            t0 = time.perf_counter()
            run_replication(sc, make_strategy, seed=0)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    ok = all(b > a for a, b in zip(times, times[1:]))
    report(12, "timing grows with stages", ok, "s/rep " + ", ".join(f"N={n}: {t:.3f}" for n, t in
                                                                   enumerate(times, 1)))
