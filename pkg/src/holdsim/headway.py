"""Headway geometry on the expected-travel-time circle.

Every critical point of the loop gets a virtual coordinate: the expected time
to reach it from the departure at stop 1, counting cruise time, expected signal
delays and expected dwells. A bus's progress is the departure coordinate of its
target stop minus its time to activation, and headways are circular gaps in
progress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .scenario import Scenario
from .traffic import expected_signal_delay


class SaturationError(ValueError):
    """Demand is too high for the fleet: the expected headway fixed point diverges."""


def expected_dwell_fixed_point(scenario: Scenario) -> tuple[dict[int, float], float]:
    """Solve the expected system headway with boarder-proportional dwells.

    The fixed point ``H = (X/v + sum(w_i) + sum(alpha * r_e * H / 60)) / n_B`` is
    linear in ``H``; returns the per-stop expected dwell and ``H``.
    """
    alpha = scenario.dwell.per_boarder_s
    base = scenario.loop_length_m / scenario.cruise_speed_mps + math.fsum(
        expected_signal_delay(i) for i in scenario.intersections)
    denom = scenario.n_buses - alpha * math.fsum(s.arrival_rate for s in scenario.stops) / 60.0
    if denom <= 0:
        raise SaturationError(
            f"boarding demand saturates the fleet (n_B - alpha*sum(r)/60 = {denom:.4g} <= 0)")
    esh = base / denom
    dwells = {s.id: alpha * s.arrival_rate * esh / 60.0 for s in scenario.stops}
    return dwells, esh


@dataclass(frozen=True)
class VirtualCoordinateMap:
    # per critical point, in scenario.critical_points order
    arrive: tuple[float, ...]
    depart: tuple[float, ...]
    cycle_s: float
    # per stop id - 1
    stop_depart: tuple[float, ...]
    segment_time: tuple[float, ...]  # expected travel stop e -> e+1, no dwell
    expected_dwell: tuple[float, ...]

    def V(self, stop_id: int) -> float:
        return self.stop_depart[stop_id - 1]


def build_virtual_map(scenario: Scenario, expected_dwell: Mapping[int, float] | None = None
                      ) -> VirtualCoordinateMap:
    if expected_dwell is None:
        expected_dwell, _ = expected_dwell_fixed_point(scenario)
    points = scenario.critical_points
    speed = scenario.cruise_speed_mps
    arrive, depart = [], []
    t = 0.0
    for k, p in enumerate(points):
        if p.kind == "stop":
            wait = 0.0 if k == 0 else expected_dwell[p.id]
        else:
            wait = expected_signal_delay(scenario.intersection_by_id[p.id])
        arrive.append(t)
        t += wait
        depart.append(t)
        t += scenario.road_by_id[p.next_road].length_m / speed
    cycle = t + expected_dwell[points[0].id]
    arrive[0] = cycle - expected_dwell[points[0].id]
    depart[0] = 0.0

    stop_idx = scenario.stop_point_index
    stop_depart = tuple(depart[stop_idx[s.id]] for s in scenario.stops)
    seg = []
    for s in scenario.stops:
        nxt = scenario.next_stop(s.id)
        gap = arrive[stop_idx[nxt]] - depart[stop_idx[s.id]]
        seg.append(gap % cycle if gap < 0 else gap)
    return VirtualCoordinateMap(tuple(arrive), tuple(depart), cycle, stop_depart, tuple(seg),
                                tuple(expected_dwell[s.id] for s in scenario.stops))


def progress_of(target_stop: int, time_to_activation_s: float, vmap: VirtualCoordinateMap) -> float:
    """Position of a bus on the virtual circle (not reduced mod C)."""
    return vmap.stop_depart[target_stop - 1] - time_to_activation_s


def circular_headways(positions: Sequence[float], cycle: float) -> list[float]:
    """Forward gap from each position to the next one ahead on a circle.

    Equal positions are ordered by index, the higher index counting as ahead.
    """
    n = len(positions)
    if n == 1:
        return [cycle]
    wrapped = [p % cycle for p in positions]
    order = sorted(range(n), key=lambda i: (wrapped[i], i))
    h = [0.0] * n
    for j in range(n - 1):
        h[order[j]] = wrapped[order[j + 1]] - wrapped[order[j]]
    h[order[-1]] = wrapped[order[0]] + cycle - wrapped[order[-1]]
    return h


def dispersion(headways: Sequence[float], target: float) -> float:
    """Pseudo standard deviation of headways around ``target`` (divides by n)."""
    return math.sqrt(math.fsum((h - target) ** 2 for h in headways) / len(headways))


@dataclass(frozen=True)
class HeadwaySnapshot:
    time_s: float
    headways: tuple[float, ...]  # forward headway per bus, in fleet order
    target: float
    sigma: float

    @property
    def min_headway(self) -> float:
        return min(self.headways)


def headway_snapshot(state, vmap: VirtualCoordinateMap) -> HeadwaySnapshot:
    """Headways, their mean (the dynamic target) and dispersion for a system state."""
    positions = [progress_of(e, td, vmap) for e, td in zip(state.target_stop, state.time_to_activation_s)]
    h = circular_headways(positions, vmap.cycle_s)
    target = math.fsum(h) / len(h)
    return HeadwaySnapshot(state.clock_s, tuple(h), target, dispersion(h, target))
