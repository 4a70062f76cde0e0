"""Bus-line world description: topology, fleet, signals, demand and control settings.

A :class:`Scenario` is immutable once built. Documents (YAML or JSON) are
converted with :func:`load_scenario` and written back with :func:`dump_scenario`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import yaml

NOISE_SD_PER_METER = 0.005
ZERO_ACTION_SET_ID = 0
STRATEGIES = ("none", "tshs", "nsla")
DWELL_MODES = ("board_at_release", "doors_closed")


class ScenarioError(ValueError):
    """Raised when a scenario document violates the schema or an invariant."""

    def __init__(self, message: str, entity: str | None = None):
        self.entity = entity
        super().__init__(f"{entity}: {message}" if entity else message)


@dataclass(frozen=True)
class Stop:
    id: int
    arrival_rate: float  # passengers per minute
    destination_series_id: int
    controllable: bool = False
    action_set_id: int = ZERO_ACTION_SET_ID


@dataclass(frozen=True)
class Intersection:
    id: int
    red_s: float
    green_s: float
    cycle_s: float
    initial_phase: str  # "red" | "green"
    initial_phase_remaining_s: float
    host_bus_line_segment: int | None = None


@dataclass(frozen=True)
class RoadSegment:
    id: int
    length_m: float
    noise_sd_s: float


@dataclass(frozen=True)
class BusLineSegment:
    id: int
    from_stop: int
    to_stop: int
    # ("road", id) / ("intersection", id) in traversal order
    ordered_elements: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class BusSpec:
    id: int
    capacity: int
    initial_target_stop: int
    rtba_s: float


@dataclass(frozen=True)
class ActionSet:
    id: int
    holding_times_s: tuple[float, ...]


@dataclass(frozen=True)
class DestinationSeries:
    id: int
    probabilities: tuple[float, ...]


@dataclass(frozen=True)
class DwellParams:
    per_boarder_s: float = 1.0
    per_alighter_s: float = 0.5
    mode: str = "board_at_release"


@dataclass(frozen=True)
class BunchingParams:
    threshold_frac: float = 0.15
    window_ctps: int = 20


@dataclass(frozen=True)
class ControlParams:
    strategy: str = "nsla"
    stages: int = 3
    gamma: float = 0.5
    terminal_stops: tuple[int, ...] = ()


@dataclass(frozen=True)
class CriticalPoint:
    """A stop or intersection on the loop, with the road that leaves it."""

    kind: str  # "stop" | "intersection"
    id: int
    distance_m: float  # from stop 1 along the loop
    next_road: int  # road segment id leaving this point


@dataclass(frozen=True)
class Scenario:
    stops: tuple[Stop, ...]
    intersections: tuple[Intersection, ...]
    road_segments: tuple[RoadSegment, ...]
    bus_line_segments: tuple[BusLineSegment, ...]
    buses: tuple[BusSpec, ...]
    destination_series: tuple[DestinationSeries, ...]
    action_sets: tuple[ActionSet, ...]
    cruise_speed_mps: float
    observation_period_s: float
    control: ControlParams = field(default_factory=ControlParams)
    dwell: DwellParams = field(default_factory=DwellParams)
    bunching: BunchingParams = field(default_factory=BunchingParams)
    no_overtaking: bool = True

    def __post_init__(self):
        validate(self)

    # -- convenience views -------------------------------------------------

    @property
    def discount(self) -> float:
        return self.control.gamma

    @property
    def lookahead_stages(self) -> int:
        return self.control.stages

    @property
    def n_stops(self) -> int:
        return len(self.stops)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @cached_property
    def loop_length_m(self) -> float:
        return math.fsum(r.length_m for r in self.road_segments)

    @cached_property
    def stop_by_id(self) -> dict[int, Stop]:
        return {s.id: s for s in self.stops}

    @cached_property
    def intersection_by_id(self) -> dict[int, Intersection]:
        return {i.id: i for i in self.intersections}

    @cached_property
    def road_by_id(self) -> dict[int, RoadSegment]:
        return {r.id: r for r in self.road_segments}

    @cached_property
    def action_set_by_id(self) -> dict[int, ActionSet]:
        return {a.id: a for a in self.action_sets}

    @cached_property
    def series_by_id(self) -> dict[int, DestinationSeries]:
        return {d.id: d for d in self.destination_series}

    def actions_at(self, stop_id: int) -> tuple[float, ...]:
        return self.action_set_by_id[self.stop_by_id[stop_id].action_set_id].holding_times_s

    def next_stop(self, stop_id: int) -> int:
        return stop_id % self.n_stops + 1

    @cached_property
    def critical_points(self) -> tuple[CriticalPoint, ...]:
        """Stops and intersections in traversal order, starting at stop 1."""
        points = []
        dist = 0.0
        for bls in self.bus_line_segments:
            kind, ident = "stop", bls.from_stop
            for ekind, eid in bls.ordered_elements:
                if ekind == "road":
                    points.append(CriticalPoint(kind, ident, dist, eid))
                    dist += self.road_by_id[eid].length_m
                else:
                    kind, ident = "intersection", eid
        return tuple(points)

    @cached_property
    def stop_point_index(self) -> dict[int, int]:
        return {p.id: k for k, p in enumerate(self.critical_points) if p.kind == "stop"}

    def segment_from(self, stop_id: int) -> BusLineSegment:
        return self.bus_line_segments[stop_id - 1]

    def with_control(self, *, strategy: str | None = None, stages: int | None = None,
                     gamma: float | None = None, control_stops: Iterable[int] | None = None,
                     action_set: Sequence[float] | int | None = None,
                     terminal_stops: Iterable[int] | None = None) -> "Scenario":
        """Return a copy with experiment-level control overrides applied.

        ``action_set`` may be an existing set id or an explicit list of holding
        times; it replaces the set of every controllable stop.
        """
        ctl = self.control
        ctl = replace(
            ctl,
            strategy=ctl.strategy if strategy is None else strategy,
            stages=ctl.stages if stages is None else int(stages),
            gamma=ctl.gamma if gamma is None else float(gamma),
            terminal_stops=ctl.terminal_stops if terminal_stops is None
            else tuple(sorted(int(s) for s in terminal_stops)),
        )
        action_sets = list(self.action_sets)
        set_id = None
        if isinstance(action_set, int):
            set_id = action_set
        elif action_set is not None:
            times = tuple(float(a) for a in action_set)
            match = [a for a in action_sets if a.holding_times_s == times]
            if match:
                set_id = match[0].id
            else:
                set_id = max(a.id for a in action_sets) + 1
                action_sets.append(ActionSet(set_id, times))
        controlled = None if control_stops is None else {int(s) for s in control_stops}
        stops = []
        for s in self.stops:
            is_ctl = s.controllable if controlled is None else s.id in controlled
            if not is_ctl:
                sid = ZERO_ACTION_SET_ID
            elif set_id is not None:
                sid = set_id
            elif s.controllable:
                sid = s.action_set_id
            else:
                sid = default_action_set_id(self)
            stops.append(replace(s, controllable=is_ctl, action_set_id=sid))
        return replace(self, stops=tuple(stops), action_sets=tuple(action_sets), control=ctl)


def default_action_set_id(scenario: Scenario) -> int:
    used = [s.action_set_id for s in scenario.stops if s.controllable]
    if used:
        return min(used)
    nonzero = [a.id for a in scenario.action_sets if a.id != ZERO_ACTION_SET_ID]
    if not nonzero:
        raise ScenarioError("no non-trivial action set available for controllable stops")
    return min(nonzero)


# -- validation --------------------------------------------------------------

def _unique_ids(items, what):
    seen = set()
    for it in items:
        if it.id in seen:
            raise ScenarioError("duplicate id", f"{what} {it.id}")
        seen.add(it.id)
    return seen


def validate(sc: Scenario) -> None:
    if sc.cruise_speed_mps <= 0:
        raise ScenarioError("cruise speed must be positive", "line")
    if sc.observation_period_s < 0:
        raise ScenarioError("observation period must be non-negative", "line")
    stop_ids = _unique_ids(sc.stops, "stop")
    if not stop_ids or stop_ids != set(range(1, len(sc.stops) + 1)):
        raise ScenarioError("stop ids must be 1..n", "stops")
    if [s.id for s in sc.stops] != sorted(stop_ids):
        raise ScenarioError("stops must be listed in loop order", "stops")
    road_ids = _unique_ids(sc.road_segments, "road segment")
    inter_ids = _unique_ids(sc.intersections, "intersection")
    series_ids = _unique_ids(sc.destination_series, "series")
    aset_ids = _unique_ids(sc.action_sets, "action set")
    _unique_ids(sc.buses, "bus")

    for a in sc.action_sets:
        hs = a.holding_times_s
        if not hs or hs[0] != 0:
            raise ScenarioError("holding times must begin with 0", f"action set {a.id}")
        if any(x < 0 for x in hs) or any(b <= a_ for a_, b in zip(hs, hs[1:])):
            raise ScenarioError("holding times must be non-negative and strictly increasing",
                                f"action set {a.id}")
    if ZERO_ACTION_SET_ID not in aset_ids:
        raise ScenarioError("missing the {0} action set", "action_sets")
    if sc.action_set_by_id[ZERO_ACTION_SET_ID].holding_times_s != (0.0,):
        raise ScenarioError("reserved set must be exactly {0}", f"action set {ZERO_ACTION_SET_ID}")

    for d in sc.destination_series:
        if any(p < 0 for p in d.probabilities):
            raise ScenarioError("negative probability", f"series {d.id}")
        if abs(math.fsum(d.probabilities) - 1.0) > 1e-9:
            raise ScenarioError("probabilities must sum to 1", f"series {d.id}")
        if len(d.probabilities) >= len(sc.stops):
            raise ScenarioError("series longer than the number of downstream stops",
                                f"series {d.id}")

    for s in sc.stops:
        if s.arrival_rate < 0:
            raise ScenarioError("arrival rate must be >= 0", f"stop {s.id}")
        if s.destination_series_id not in series_ids:
            raise ScenarioError("unknown destination series", f"stop {s.id}")
        if s.action_set_id not in aset_ids:
            raise ScenarioError("unknown action set", f"stop {s.id}")
        if not s.controllable and sc.action_set_by_id[s.action_set_id].holding_times_s != (0.0,):
            raise ScenarioError("non-control stop must use the {0} action set", f"stop {s.id}")

    for i in sc.intersections:
        if i.red_s < 0 or i.green_s < 0:
            raise ScenarioError("phase durations must be >= 0", f"intersection {i.id}")
        if abs(i.cycle_s - (i.red_s + i.green_s)) > 1e-9:
            raise ScenarioError("cycle must equal red + green", f"intersection {i.id}")
        if i.initial_phase not in ("red", "green"):
            raise ScenarioError("initial phase must be red or green", f"intersection {i.id}")
        dur = i.red_s if i.initial_phase == "red" else i.green_s
        if not 0 < i.initial_phase_remaining_s <= dur:
            raise ScenarioError("initial phase remaining time out of range", f"intersection {i.id}")

    for r in sc.road_segments:
        if r.length_m <= 0:
            raise ScenarioError("length must be positive", f"road segment {r.id}")
        if r.noise_sd_s < 0:
            raise ScenarioError("noise sd must be >= 0", f"road segment {r.id}")

    n = len(sc.stops)
    if len(sc.bus_line_segments) != n:
        raise ScenarioError("need exactly one bus line segment per stop", "bus_line_segments")
    roads_seen, inters_seen = [], []
    for k, g in enumerate(sc.bus_line_segments, start=1):
        ent = f"bus line segment {g.id}"
        if g.id != k or g.from_stop != k or g.to_stop != k % n + 1:
            raise ScenarioError("segments must run stop k -> stop k+1 in order", ent)
        kinds = [e[0] for e in g.ordered_elements]
        if not kinds or kinds[0] != "road" or kinds[-1] != "road" or any(
                a == b for a, b in zip(kinds, kinds[1:])):
            raise ScenarioError("elements must alternate road/intersection, starting and "
                                "ending with a road", ent)
        for kind, eid in g.ordered_elements:
            if kind == "road":
                if eid not in road_ids:
                    raise ScenarioError(f"unknown road segment {eid}", ent)
                roads_seen.append(eid)
            elif kind == "intersection":
                if eid not in inter_ids:
                    raise ScenarioError(f"unknown intersection {eid}", ent)
                host = sc.intersection_by_id[eid].host_bus_line_segment
                if host is not None and host != g.id:
                    raise ScenarioError(f"intersection {eid} declares host {host}", ent)
                inters_seen.append(eid)
            else:
                raise ScenarioError(f"unknown element kind {kind!r}", ent)
    if sorted(roads_seen) != sorted(road_ids):
        raise ScenarioError("every road segment must appear exactly once", "bus_line_segments")
    if sorted(inters_seen) != sorted(inter_ids):
        raise ScenarioError("every intersection must appear in exactly one bus line segment",
                            "bus_line_segments")

    if not sc.buses:
        raise ScenarioError("at least one bus required", "buses")
    for b in sc.buses:
        if b.capacity <= 0:
            raise ScenarioError("capacity must be positive", f"bus {b.id}")
        if b.rtba_s < 0:
            raise ScenarioError("RTBA must be >= 0", f"bus {b.id}")
        if b.initial_target_stop not in stop_ids:
            raise ScenarioError("unknown initial stop", f"bus {b.id}")
    starts = [b.initial_target_stop for b in sc.buses]
    if len(set(starts)) != len(starts):
        raise ScenarioError("buses must start at distinct stops", "buses")

    c = sc.control
    if c.strategy not in STRATEGIES:
        raise ScenarioError(f"strategy must be one of {STRATEGIES}", "control")
    if c.stages < 1:
        raise ScenarioError("stages must be >= 1", "control")
    if not 0 < c.gamma <= 1:
        raise ScenarioError("gamma must lie in (0, 1]", "control")
    for t in c.terminal_stops:
        if t not in stop_ids:
            raise ScenarioError(f"unknown terminal stop {t}", "control")
    if sc.dwell.per_boarder_s < 0 or sc.dwell.per_alighter_s < 0:
        raise ScenarioError("dwell coefficients must be >= 0", "dwell")
    if sc.dwell.mode not in DWELL_MODES:
        raise ScenarioError(f"dwell mode must be one of {DWELL_MODES}", "dwell")
    if sc.bunching.threshold_frac <= 0 or sc.bunching.window_ctps < 1:
        raise ScenarioError("bunching parameters must be positive", "bunching")


# -- documents ---------------------------------------------------------------

def _req(d: Mapping, key: str, ent: str):
    try:
        return d[key]
    except (KeyError, TypeError):
        raise ScenarioError(f"missing field {key!r}", ent) from None


def _phase(value, ent):
    if value in (1, "1", "red"):
        return "red"
    if value in (2, "2", "green"):
        return "green"
    raise ScenarioError(f"bad initial_phase {value!r}", ent)


def _parse_element(el, ent):
    if isinstance(el, Mapping) and len(el) == 1:
        ((kind, eid),) = el.items()
    elif isinstance(el, str) and ":" in el:
        kind, eid = el.split(":", 1)
    else:
        raise ScenarioError(f"bad element {el!r}", ent)
    if kind not in ("road", "intersection"):
        raise ScenarioError(f"element must be tagged road|intersection, got {kind!r}", ent)
    return kind, int(eid)


def scenario_from_document(doc: Mapping[str, Any]) -> Scenario:
    """Build and validate a :class:`Scenario` from a parsed document."""
    if not isinstance(doc, Mapping):
        raise ScenarioError("document must be a mapping")
    try:
        line = _req(doc, "line", "line")
        speed = float(_req(line, "cruise_speed_kmh", "line")) / 3.6
        period = float(_req(line, "observation_period_s", "line"))
        no_overtaking = bool(line.get("no_overtaking", True))

        ctl_doc = doc.get("control") or {}
        action_sets = {ZERO_ACTION_SET_ID: ActionSet(ZERO_ACTION_SET_ID, (0.0,))}
        for a in doc.get("action_sets") or []:
            ent = f"action set {a.get('id')}"
            aid = int(_req(a, "id", ent))
            action_sets[aid] = ActionSet(aid, tuple(float(x) for x in _req(a, "holding_times_s", ent)))
        ctl_set = ctl_doc.get("action_set")
        if isinstance(ctl_set, list):
            times = tuple(float(x) for x in ctl_set)
            ctl_set = next((k for k, v in action_sets.items() if v.holding_times_s == times), None)
            if ctl_set is None:
                ctl_set = max(action_sets) + 1
                action_sets[ctl_set] = ActionSet(ctl_set, times)
        elif ctl_set is not None:
            ctl_set = int(ctl_set)
            if ctl_set not in action_sets:
                raise ScenarioError(f"unknown action set {ctl_set}", "control")
        if ctl_set is None:
            nonzero = sorted(k for k in action_sets if k != ZERO_ACTION_SET_ID)
            ctl_set = nonzero[0] if nonzero else ZERO_ACTION_SET_ID
        control_stops = ctl_doc.get("control_stops")
        control_stops = None if control_stops is None else {int(s) for s in control_stops}

        stops = []
        for s in _req(doc, "stops", "stops"):
            ent = f"stop {s.get('id')}"
            sid = int(_req(s, "id", ent))
            ctl = bool(s.get("controllable", False)) if control_stops is None else sid in control_stops
            aset = s.get("action_set")
            if not ctl:
                aset = ZERO_ACTION_SET_ID if aset is None else int(aset)
            else:
                aset = ctl_set if aset is None else int(aset)
            stops.append(Stop(sid, float(_req(s, "rate_per_min", ent)), int(_req(s, "series", ent)),
                              ctl, aset))

        roads = []
        for r in _req(doc, "road_segments", "road_segments"):
            ent = f"road segment {r.get('id')}"
            length = float(_req(r, "length_m", ent))
            roads.append(RoadSegment(int(_req(r, "id", ent)), length,
                                     float(r.get("noise_sd_s", NOISE_SD_PER_METER * length))))

        hosts = {}
        segs_raw = sorted(_req(doc, "bus_line_segments", "bus_line_segments"),
                          key=lambda g: int(g.get("id", 0)))
        n = len(segs_raw)
        segs = []
        for k, g in enumerate(segs_raw):
            ent = f"bus line segment {g.get('id')}"
            gid = int(_req(g, "id", ent))
            elements = tuple(_parse_element(e, ent) for e in _req(g, "elements", ent))
            for kind, eid in elements:
                if kind == "intersection":
                    hosts[eid] = gid
            nxt = int(segs_raw[(k + 1) % n].get("from_stop", 0)) if n else 0
            segs.append(BusLineSegment(gid, int(_req(g, "from_stop", ent)),
                                       int(g.get("to_stop", nxt)), elements))

        inters = []
        for i in doc.get("intersections") or []:
            ent = f"intersection {i.get('id')}"
            iid = int(_req(i, "id", ent))
            red, green = float(_req(i, "red_s", ent)), float(_req(i, "green_s", ent))
            inters.append(Intersection(iid, red, green, float(i.get("cycle_s", red + green)),
                                       _phase(_req(i, "initial_phase", ent), ent),
                                       float(_req(i, "initial_phase_remaining_s", ent)),
                                       hosts.get(iid)))

        buses = []
        for b in _req(doc, "buses", "buses"):
            ent = f"bus {b.get('id')}"
            buses.append(BusSpec(int(_req(b, "id", ent)), int(_req(b, "capacity", ent)),
                                 int(_req(b, "initial_stop", ent)), float(_req(b, "rtba_s", ent))))

        series = []
        for d in _req(doc, "series", "series"):
            ent = f"series {d.get('id')}"
            series.append(DestinationSeries(int(_req(d, "id", ent)),
                                            tuple(float(p) for p in _req(d, "probabilities", ent))))

        control = ControlParams(
            strategy=str(ctl_doc.get("strategy", "nsla")),
            stages=int(ctl_doc.get("stages", 3)),
            gamma=float(ctl_doc.get("gamma", 0.5)),
            terminal_stops=tuple(sorted(int(t) for t in ctl_doc.get("terminal_stops", ()))),
        )
        dw = doc.get("dwell") or {}
        dwell = DwellParams(float(dw.get("per_boarder_s", 1.0)), float(dw.get("per_alighter_s", 0.5)),
                            str(dw.get("mode", "board_at_release")))
        bu = doc.get("bunching") or {}
        bunching = BunchingParams(float(bu.get("threshold_frac", 0.15)), int(bu.get("window_ctps", 20)))
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"schema violation: {exc}") from exc

    return Scenario(
        stops=tuple(stops),
        intersections=tuple(sorted(inters, key=lambda i: i.id)),
        road_segments=tuple(sorted(roads, key=lambda r: r.id)),
        bus_line_segments=tuple(segs),
        buses=tuple(sorted(buses, key=lambda b: b.id)),
        destination_series=tuple(sorted(series, key=lambda d: d.id)),
        action_sets=tuple(action_sets[k] for k in sorted(action_sets)),
        cruise_speed_mps=speed,
        observation_period_s=period,
        control=control,
        dwell=dwell,
        bunching=bunching,
        no_overtaking=no_overtaking,
    )


def dump_scenario(sc: Scenario) -> dict[str, Any]:
    """Inverse of :func:`scenario_from_document`."""
    return {
        "line": {"cruise_speed_kmh": sc.cruise_speed_mps * 3.6,
                 "observation_period_s": sc.observation_period_s,
                 "no_overtaking": sc.no_overtaking},
        "stops": [{"id": s.id, "rate_per_min": s.arrival_rate, "series": s.destination_series_id,
                   "controllable": s.controllable, "action_set": s.action_set_id} for s in sc.stops],
        "road_segments": [{"id": r.id, "length_m": r.length_m, "noise_sd_s": r.noise_sd_s}
                          for r in sc.road_segments],
        "bus_line_segments": [{"id": g.id, "from_stop": g.from_stop, "to_stop": g.to_stop,
                               "elements": [{k: i} for k, i in g.ordered_elements]}
                              for g in sc.bus_line_segments],
        "intersections": [{"id": i.id, "red_s": i.red_s, "green_s": i.green_s, "cycle_s": i.cycle_s,
                           "initial_phase": i.initial_phase,
                           "initial_phase_remaining_s": i.initial_phase_remaining_s}
                          for i in sc.intersections],
        "buses": [{"id": b.id, "capacity": b.capacity, "initial_stop": b.initial_target_stop,
                   "rtba_s": b.rtba_s} for b in sc.buses],
        "series": [{"id": d.id, "probabilities": list(d.probabilities)} for d in sc.destination_series],
        "action_sets": [{"id": a.id, "holding_times_s": list(a.holding_times_s)}
                        for a in sc.action_sets if a.id != ZERO_ACTION_SET_ID],
        "control": {"strategy": sc.control.strategy, "stages": sc.control.stages,
                    "gamma": sc.control.gamma,
                    "control_stops": [s.id for s in sc.stops if s.controllable],
                    "terminal_stops": list(sc.control.terminal_stops)},
        "dwell": {"per_boarder_s": sc.dwell.per_boarder_s, "per_alighter_s": sc.dwell.per_alighter_s,
                  "mode": sc.dwell.mode},
        "bunching": {"threshold_frac": sc.bunching.threshold_frac,
                     "window_ctps": sc.bunching.window_ctps},
    }


def load_scenario(source: str | Path | Mapping[str, Any]) -> Scenario:
    """Load a scenario from a mapping, a YAML/JSON file path, or ``builtin:<name>``."""
    if isinstance(source, Mapping):
        return scenario_from_document(source)
    text = str(source)
    if text.startswith("builtin:"):
        from .fixtures import builtin_fixture
        return builtin_fixture(text.split(":", 1)[1])
    path = Path(text)
    if not path.exists():
        raise ScenarioError(f"no such scenario file: {path}")
    raw = path.read_text(encoding="utf-8")
    doc = json.loads(raw) if path.suffix == ".json" else yaml.safe_load(raw)
    return scenario_from_document(doc)
