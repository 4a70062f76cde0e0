import math
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from holdsim.engine import SystemState
from holdsim.headway import (SaturationError, build_virtual_map, circular_headways, dispersion,
                             expected_dwell_fixed_point, headway_snapshot, progress_of)
from holdsim.scenario import DwellParams

# red/green of the 13 signals; expected delay r^2 / (2 (r + g)) each
_RED_GREEN = [(40, 50), (40, 30), (40, 35), (30, 45), (30, 30), (40, 30), (40, 45), (30, 35),
              (30, 45), (40, 50), (40, 30), (40, 35), (30, 45)]
SIGNAL_DELAY_TOTAL = sum(0.5 * r * r / (r + g) for r, g in _RED_GREEN)


def test_esh_closed_form(line):
    _, esh = expected_dwell_fixed_point(line)
    assert esh == pytest.approx((1795 + SIGNAL_DELAY_TOTAL) / (9 - 57 / 60), rel=1e-9)
    assert esh == pytest.approx(237.3, abs=0.05)


def test_esh_without_boarding_time(line):
    sc = replace(line, dwell=DwellParams(per_boarder_s=0.0))
    dwells, esh = expected_dwell_fixed_point(sc)
    assert esh == pytest.approx((1795 + SIGNAL_DELAY_TOTAL) / 9, rel=1e-9)
    assert round(esh, 1) == 212.2
    assert set(dwells.values()) == {0.0}


def test_saturation(line):
    sc = replace(line, dwell=DwellParams(per_boarder_s=10.0))
    with pytest.raises(SaturationError):
        expected_dwell_fixed_point(sc)


def test_cycle_with_zero_dwells(line):
    vm = build_virtual_map(line, {s.id: 0.0 for s in line.stops})
    assert vm.cycle_s == pytest.approx(1795 + SIGNAL_DELAY_TOTAL, abs=1e-9)


def test_cycle_is_fleet_times_esh(vmap_esh):
    vm, esh = vmap_esh
    assert abs(vm.cycle_s - 9 * esh) < 1e-6


def test_map_is_monotone(vmap_esh):
    vm, _ = vmap_esh
    seq = [vm.depart[0]] + [x for pair in zip(vm.arrive[1:], vm.depart[1:]) for x in pair]
    assert all(a <= b for a, b in zip(seq, seq[1:]))
    assert vm.arrive[0] < vm.cycle_s


def test_segment_times_close_loop(vmap_esh):
    vm, _ = vmap_esh
    assert math.fsum(vm.segment_time) + math.fsum(vm.expected_dwell) == pytest.approx(vm.cycle_s)


def test_progress_examples(vmap_esh):
    vm, _ = vmap_esh
    assert progress_of(4, 0.0, vm) == vm.V(4)
    assert progress_of(7, 10.0, vm) - progress_of(7, 40.0, vm) == pytest.approx(30.0)
    p = progress_of(12, 33.0, vm)
    assert (p + vm.cycle_s) % vm.cycle_s == pytest.approx(p % vm.cycle_s)


def test_equal_spacing():
    h = circular_headways([0, 200, 400], 600)
    assert h == [200, 200, 200]
    assert dispersion(h, 200) == 0


def test_uneven_spacing():
    h = circular_headways([0, 100, 300], 600)
    assert sorted(h) == [100, 200, 300]
    mean = math.fsum(h) / 3
    assert mean == 200
    assert dispersion(h, mean) == pytest.approx(math.sqrt(20000 / 3))
    assert round(dispersion(h, mean), 2) == 81.65


def test_headway_is_gap_to_leader():
    # bus 0 at 50 has bus 2 at 70 ahead of it
    assert circular_headways([50, 500, 70], 600) == [20, 150, 430]


def test_tied_positions_higher_index_leads():
    assert circular_headways([10, 10], 100) == [0, 100]


positions = st.lists(st.floats(-5000, 5000, allow_nan=False), min_size=1, max_size=12)


@given(positions, st.floats(10, 4000))
def test_headways_telescope(pos, cycle):
    h = circular_headways(pos, cycle)
    assert math.fsum(h) == pytest.approx(cycle, abs=1e-6)
    assert all(x >= 0 for x in h)


@given(st.lists(st.floats(0.5, 300), min_size=2, max_size=10))
def test_dispersion_zero_iff_equal(h):
    target = math.fsum(h) / len(h)
    s = dispersion(h, target)
    if max(h) - min(h) < 1e-9:
        assert s == pytest.approx(0, abs=1e-6)
    else:
        assert s > 0


def _state(targets, tds):
    return SystemState(0.0, tuple(range(1, len(targets) + 1)), tuple(targets), tuple(tds),
                       (0.0,) * 30, 0)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(1, 30), st.floats(0, 200)), min_size=3, max_size=9,
                unique_by=lambda x: x[0]),
       st.integers(0, 8), st.floats(0.5, 15))
def test_hold_shifts_one_gap(vmap_esh, buses, who, a):
    vm, _ = vmap_esh
    who %= len(buses)
    targets = [b[0] for b in buses]
    tds = [b[1] for b in buses]
    before = headway_snapshot(_state(targets, tds), vm)
    h0 = list(before.headways)
    C = vm.cycle_s

    def gap(j):
        d = (progress_of(targets[j], tds[j], vm) + h0[j] - progress_of(targets[who], tds[who], vm)) % C
        return min(d, C - d)

    follower = min((j for j in range(len(h0)) if j != who), key=gap)
    assert gap(follower) < 1e-6
    # the hold must not move the bus past its follower
    if h0[follower] <= a + 1e-6:
        return
    tds[who] += a
    after = headway_snapshot(_state(targets, tds), vm).headways
    for j, (x, y) in enumerate(zip(h0, after)):
        if j == who:
            assert y == pytest.approx(x + a, abs=1e-6)
        elif j == follower:
            assert y == pytest.approx(x - a, abs=1e-6)
        else:
            assert y == pytest.approx(x, abs=1e-6)
    assert math.fsum(after) == pytest.approx(vm.cycle_s, abs=1e-6)
    assert before.target == pytest.approx(vm.cycle_s / len(buses))
