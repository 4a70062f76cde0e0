"""Discrete-event simulation of the circular line.

Buses move point to point (stops and signalized intersections). A bus that
finishes boarding and alighting reaches a critical time point (CTP): the
simulation snapshots the :class:`SystemState`, asks the strategy for a holding
time, applies it and carries on. :meth:`Simulation.step_to_next_ctp` advances
exactly one CTP; :func:`run_replication` drives a whole observation period.
"""

from __future__ import annotations

import heapq
import io
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

from . import streams
from .headway import (HeadwaySnapshot, VirtualCoordinateMap, build_virtual_map,
                      expected_dwell_fixed_point, headway_snapshot)
from .scenario import Scenario
from .traffic import (Passenger, dwell_time, generate_passengers, sample_travel_time,
                      signal_delay_at)

# event kinds, ordered so departures at an instant precede service ends and arrivals
_DEPART, _CTP, _HOLD_END, _ARRIVE = 0, 1, 2, 3

ARRIVE_STOP = "arrive_stop"
DEPART_STOP = "depart_stop"
ARRIVE_INTERSECTION = "arrive_intersection"
DEPART_INTERSECTION = "depart_intersection"
HOLD_START = "hold_start"
HOLD_END = "hold_end"

QUEUE_GAP_S = 1.0


class StrategyError(RuntimeError):
    """A strategy returned a holding time outside the stop's action set."""


@dataclass(frozen=True)
class SystemState:
    clock_s: float
    bus_ids: tuple[int, ...]
    target_stop: tuple[int, ...]
    time_to_activation_s: tuple[float, ...]
    latest_arrival_s: tuple[float, ...]  # per stop id - 1
    trigger_bus: int  # index into bus_ids

    @property
    def trigger_stop(self) -> int:
        return self.target_stop[self.trigger_bus]


@dataclass
class Decision:
    holding_s: float
    record: object = None


class Strategy(Protocol):
    name: str
    continuous: bool

    def decide(self, state: SystemState) -> Decision: ...


@dataclass(frozen=True)
class LogRecord:
    time_s: float
    bus_id: int
    kind: str
    location: str  # "stop:4" / "intersection:7"
    distance_m: float  # unwrapped along the loop


@dataclass
class EventLog:
    records: list[LogRecord] = field(default_factory=list)

    def to_tsv(self) -> str:
        out = io.StringIO()
        out.write("time_s\tbus_id\tevent\tlocation\tcumulative_distance_m\n")
        for r in self.records:
            out.write(f"{r.time_s!r}\t{r.bus_id}\t{r.kind}\t{r.location}\t{r.distance_m!r}\n")
        return out.getvalue()

    def trajectory_tsv(self) -> str:
        """``time_s, bus_id, cumulative_distance_m`` for every arrive/depart event."""
        out = io.StringIO()
        out.write("time_s\tbus_id\tcumulative_distance_m\n")
        for r in self.records:
            if r.kind.startswith(("arrive", "depart")):
                out.write(f"{r.time_s:.3f}\t{r.bus_id}\t{r.distance_m:.1f}\n")
        return out.getvalue()


@dataclass
class CtpRecord:
    time_s: float
    bus_id: int
    stop_id: int
    holding_s: float
    snapshot: HeadwaySnapshot
    state: SystemState
    decision_s: float
    record: object = None


@dataclass
class _Bus:
    idx: int
    id: int
    capacity: int
    point: int  # current point, or the point being approached when moving/queued
    phase: str  # serving | held | signal | moving | queued
    target_stop: int
    event_time: float | None
    lap: int = 0
    steps: int = 0  # unwrapped index of ``point``
    onboard: dict = field(default_factory=dict)  # destination stop -> [Passenger]
    load: int = 0
    leader: int = -1
    follower: int = -1
    queued_behind: bool = False


class Simulation:
    """One replication's mutable world."""

    def __init__(self, scenario: Scenario, seed: int = 0, replication: int = 0,
                 vmap: VirtualCoordinateMap | None = None, esh: float | None = None):
        self.sc = scenario
        if vmap is None or esh is None:
            dwells, esh_ = expected_dwell_fixed_point(scenario)
            vmap = vmap or build_virtual_map(scenario, dwells)
            esh = esh if esh is not None else esh_
        self.vmap = vmap
        self.esh = esh
        self.horizon = scenario.observation_period_s
        self.clock = 0.0
        self.log = EventLog()
        self._heap: list = []
        self._seq = 0
        self._pid = 0

        pts = scenario.critical_points
        self._points = pts
        self._n_points = len(pts)
        self._stop_point = scenario.stop_point_index
        self._roads = [scenario.road_by_id[p.next_road] for p in pts]
        self._labels = [f"{p.kind}:{p.id}" for p in pts]
        self._inters = [scenario.intersection_by_id[p.id] if p.kind == "intersection" else None
                        for p in pts]

        n_stops = scenario.n_stops
        self.latest_arrival = [-esh] * n_stops
        self._waiting = [[] for _ in range(n_stops)]  # passengers present, FIFO
        self._pending = []  # pre-generated arrivals per stop, sorted by time
        self._pending_pos = [0] * n_stops
        self.passengers: list[Passenger] = []
        for s in scenario.stops:
            if self.horizon > 0:
                plist = generate_passengers(
                    s.id, s.arrival_rate, (0.0, self.horizon), scenario.series_by_id[s.destination_series_id],
                    n_stops, streams.stream(seed, replication, streams.ARRIVALS, s.id),
                    streams.stream(seed, replication, streams.DESTINATIONS, s.id), first_id=self._pid)
            else:
                plist = []
            self._pid += len(plist)
            self._pending.append(plist)
            self.passengers.extend(plist)

        self.buses: list[_Bus] = []
        for i, spec in enumerate(scenario.buses):
            k = self._stop_point[spec.initial_target_stop]
            b = _Bus(i, spec.id, spec.capacity, k, "serving", spec.initial_target_stop, spec.rtba_s,
                     steps=k)
            self.buses.append(b)
        self._noise = [streams.BufferedNormals(streams.stream(seed, replication, streams.TRAVEL, b.id))
                       for b in self.buses]
        # fleet order around the loop is fixed when overtaking is forbidden
        order = sorted(self.buses, key=lambda b: b.point)
        self._lead_offset = [0] * len(self.buses)  # leader's steps lag by one loop across the seam
        for j, b in enumerate(order):
            b.leader = order[(j + 1) % len(order)].idx
            b.follower = order[j - 1].idx
        self._lead_offset[order[-1].idx] = self._n_points
        for b in self.buses:
            self.latest_arrival[b.target_stop - 1] = 0.0
            self._log(0.0, b, ARRIVE_STOP, b.point)
            self._push(b.event_time, _CTP, b)

    # -- plumbing ------------------------------------------------------------

    def _push(self, t: float, kind: int, bus: _Bus):
        bus.event_time = t
        tie = bus.id if kind == _CTP else 0
        self._seq += 1
        heapq.heappush(self._heap, (t, kind, tie, self._seq, bus.idx))

    def _distance(self, bus: _Bus, k: int) -> float:
        return bus.lap * self.sc.loop_length_m + self._points[k].distance_m

    def _log(self, t: float, bus: _Bus, kind: str, k: int):
        self.log.records.append(LogRecord(t, bus.id, kind, self._labels[k], self._distance(bus, k)))

    def _release_arrivals(self, stop_id: int, t: float):
        i = stop_id - 1
        plist, pos = self._pending[i], self._pending_pos[i]
        end = pos
        while end < len(plist) and plist[end].created_at_s <= t:
            end += 1
        if end > pos:
            self._waiting[i].extend(plist[pos:end])
            self._pending_pos[i] = end

    def _board(self, bus: _Bus, stop_id: int, t: float) -> int:
        self._release_arrivals(stop_id, t)
        queue = self._waiting[stop_id - 1]
        room = bus.capacity - bus.load
        n = min(room, len(queue))
        if n <= 0:
            return 0
        boarding, self._waiting[stop_id - 1] = queue[:n], queue[n:]
        for p in boarding:
            p.boarded_at_s = t
            bus.onboard.setdefault(p.destination_stop, []).append(p)
        bus.load += n
        return n

    # -- event handlers ------------------------------------------------------

    def _occupied_by_leader(self, bus: _Bus, k: int) -> bool:
        if not self.sc.no_overtaking or bus.leader == bus.idx:
            return False
        lead = self.buses[bus.leader]
        if lead.point != k:
            return False
        if lead.phase == "moving":
            # leader still on the road into k (e.g. just released from its own queue)
            return self._same_pass(bus, lead)
        return lead.phase in ("serving", "held", "signal", "queued")

    def _same_pass(self, bus: _Bus, lead: _Bus) -> bool:
        return lead.steps + self._lead_offset[bus.idx] == bus.steps

    def _arrive(self, bus: _Bus, t: float):
        k = bus.point
        if self._occupied_by_leader(bus, k):
            bus.phase = "queued"
            bus.queued_behind = True
            bus.event_time = None
            return
        bus.queued_behind = False
        if k == 0:
            bus.lap += 1
        p = self._points[k]
        if p.kind == "stop":
            self._log(t, bus, ARRIVE_STOP, k)
            e = p.id
            self.latest_arrival[e - 1] = t
            leaving = bus.onboard.pop(e, [])
            for q in leaving:
                q.alighted_at_s = t
            bus.load -= len(leaving)
            boarded = self._board(bus, e, t)
            bus.phase = "serving"
            self._push(t + dwell_time(boarded, len(leaving), self.sc.dwell), _CTP, bus)
        else:
            self._log(t, bus, ARRIVE_INTERSECTION, k)
            bus.phase = "signal"
            self._push(t + signal_delay_at(self._inters[k], t), _DEPART, bus)

    def _depart(self, bus: _Bus, t: float):
        k = bus.point
        self._log(t, bus, DEPART_STOP if self._points[k].kind == "stop" else DEPART_INTERSECTION, k)
        fol = self.buses[bus.follower]
        if fol.queued_behind and fol.phase == "queued" and fol.point == k:
            fol.phase = "moving"
            self._push(t + QUEUE_GAP_S, _ARRIVE, fol)
        travel = sample_travel_time(self._roads[k], self.sc.cruise_speed_mps, self._noise[bus.idx])
        nxt = (k + 1) % self._n_points
        arrival = t + travel
        bus.steps += 1
        if self.sc.no_overtaking and bus.leader != bus.idx:
            lead = self.buses[bus.leader]
            if (lead.phase == "moving" and lead.point == nxt and lead.event_time is not None
                    and self._same_pass(bus, lead)):
                arrival = max(arrival, lead.event_time)
        bus.point = nxt
        bus.phase = "moving"
        self._push(arrival, _ARRIVE, bus)

    def _end_hold(self, bus: _Bus, t: float):
        if self.sc.dwell.mode == "board_at_release":
            self._board(bus, self._points[bus.point].id, t)
        self._log(t, bus, HOLD_END, bus.point)
        self._depart(bus, t)

    # -- state ---------------------------------------------------------------

    def _time_to_activation(self, bus: _Bus, now: float) -> float:
        vm, C = self.vmap, self.vmap.cycle_s
        dep_target = vm.stop_depart[bus.target_stop - 1]
        k = bus.point
        if bus.phase == "serving":
            return bus.event_time - now
        if bus.phase == "held":
            return (bus.event_time - now) + (dep_target - vm.depart[k]) % C
        if bus.phase == "signal":
            return (bus.event_time - now) + (dep_target - vm.depart[k]) % C
        if bus.phase == "moving":
            return max(bus.event_time - now, 0.0) + (dep_target - vm.arrive[k]) % C
        # queued: assume entry right after the leader's next event
        lead = self.buses[bus.leader]
        entry = max(now, lead.event_time if lead.event_time is not None else now) + QUEUE_GAP_S
        return (entry - now) + (dep_target - vm.arrive[k]) % C

    def snapshot(self, trigger: _Bus) -> SystemState:
        now = self.clock
        tds = tuple(0.0 if b is trigger else max(self._time_to_activation(b, now), 0.0)
                    for b in self.buses)
        return SystemState(now, tuple(b.id for b in self.buses), tuple(b.target_stop for b in self.buses),
                           tds, tuple(self.latest_arrival), trigger.idx)

    # -- stepping ------------------------------------------------------------

    def step_to_next_ctp(self, strategy: Strategy) -> CtpRecord | None:
        """Advance to the next CTP before the horizon, apply the strategy's hold.

        Returns ``None`` once no CTP remains inside the observation period.
        """
        heap = self._heap
        while heap:
            if heap[0][0] >= self.horizon:
                return None
            t, kind, _, _, idx = heapq.heappop(heap)
            bus = self.buses[idx]
            self.clock = t
            if kind == _ARRIVE:
                self._arrive(bus, t)
            elif kind == _DEPART:
                self._depart(bus, t)
            elif kind == _HOLD_END:
                self._end_hold(bus, t)
            else:
                return self._ctp(bus, t, strategy)
        return None

    def _ctp(self, bus: _Bus, t: float, strategy: Strategy) -> CtpRecord:
        stop = self._points[bus.point].id
        if self.sc.dwell.mode == "board_at_release":
            self._board(bus, stop, t)
        state = self.snapshot(bus)
        snap = headway_snapshot(state, self.vmap)
        t0 = time.perf_counter()
        decision = strategy.decide(state)
        elapsed = time.perf_counter() - t0
        a = float(decision.holding_s)
        allowed = self.sc.actions_at(stop)
        if getattr(strategy, "continuous", False):
            if a < 0:
                raise StrategyError(f"negative holding time {a} at stop {stop}")
        elif a not in allowed:
            raise StrategyError(f"holding time {a} not in action set {allowed} of stop {stop}")
        bus.target_stop = self.sc.next_stop(stop)
        if a > 0:
            self._log(t, bus, HOLD_START, bus.point)
            bus.phase = "held"
            self._push(t + a, _HOLD_END, bus)
        else:
            bus.phase = "held"
            self._depart(bus, t)
        return CtpRecord(t, bus.id, stop, a, snap, state, elapsed, decision.record)


@dataclass
class ReplicationResult:
    log: EventLog
    ctps: list[CtpRecord]
    passengers: list[Passenger]
    vmap: VirtualCoordinateMap
    esh: float
    wall_s: float

    @property
    def completed_passengers(self) -> list[Passenger]:
        return [p for p in self.passengers if p.alighted_at_s is not None]


def run_replication(scenario: Scenario, strategy: Strategy | Callable[..., Strategy], seed: int = 0,
                    replication: int = 0, observation_period_s: float | None = None) -> ReplicationResult:
    """Simulate one observation period; ``strategy`` may be a factory ``f(scenario, vmap, esh)``."""
    if observation_period_s is not None and observation_period_s != scenario.observation_period_s:
        scenario = replace(scenario, observation_period_s=float(observation_period_s))
    t0 = time.perf_counter()
    dwells, esh = expected_dwell_fixed_point(scenario)
    vmap = build_virtual_map(scenario, dwells)
    if not hasattr(strategy, "decide"):
        strategy = strategy(scenario, vmap, esh)
    sim = Simulation(scenario, seed, replication, vmap, esh)
    ctps = []
    while (rec := sim.step_to_next_ctp(strategy)) is not None:
        ctps.append(rec)
    return ReplicationResult(sim.log, ctps, sim.passengers, vmap, esh, time.perf_counter() - t0)
