"""Holding strategies invoked at every critical time point.

``NoControl`` never holds. ``TerminalHolding`` tops the forward headway up to
the expected system headway at terminal stops. ``LookaheadHolding`` rolls the
line forward ``stages`` activations on expected values and picks the hold that
minimises the discounted sum of headway-deviation costs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .engine import Decision, SystemState
from .headway import VirtualCoordinateMap, circular_headways, headway_snapshot
from .scenario import Scenario


@dataclass(frozen=True)
class LookaheadState:
    """Target stops, activation times and latest arrivals, all relative to decision time."""

    target_stop: tuple[int, ...]
    time_to_activation_s: tuple[float, ...]
    latest_arrival_s: tuple[float, ...]  # per stop id - 1, may be negative

    @classmethod
    def from_system(cls, state: SystemState) -> "LookaheadState":
        now = state.clock_s
        return cls(state.target_stop, state.time_to_activation_s,
                   tuple(t - now for t in state.latest_arrival_s))


@dataclass(frozen=True)
class ExpectedModel:
    """Everything the roll-forward needs, precomputed from the scenario."""

    n_stops: int
    segment_time: tuple[float, ...]  # per stop id - 1: expected cruise + signal delay to next stop
    rate_per_min: tuple[float, ...]
    per_boarder_s: float
    stop_depart: tuple[float, ...]
    cycle_s: float
    actions: tuple[tuple[float, ...], ...]
    controllable: tuple[bool, ...]

    @classmethod
    def build(cls, scenario: Scenario, vmap: VirtualCoordinateMap) -> "ExpectedModel":
        return cls(
            n_stops=scenario.n_stops,
            segment_time=vmap.segment_time,
            rate_per_min=tuple(s.arrival_rate for s in scenario.stops),
            per_boarder_s=scenario.dwell.per_boarder_s,
            stop_depart=vmap.stop_depart,
            cycle_s=vmap.cycle_s,
            actions=tuple(scenario.actions_at(s.id) for s in scenario.stops),
            controllable=tuple(s.controllable for s in scenario.stops),
        )

    def headways(self, state: LookaheadState) -> list[float]:
        pos = [self.stop_depart[e - 1] - td
               for e, td in zip(state.target_stop, state.time_to_activation_s)]
        return circular_headways(pos, self.cycle_s)

    def cost(self, state: LookaheadState, reference: float) -> float:
        return math.fsum((h - reference) ** 2 for h in self.headways(state))


def activated_bus(state: LookaheadState) -> int:
    """Bus with the smallest time to activation; ties go to the lower index."""
    tds = state.time_to_activation_s
    return min(range(len(tds)), key=lambda i: (tds[i], i))


def roll_forward_one_level(state: LookaheadState, bus: int, action: float, model: ExpectedModel,
                           reference: float) -> tuple[LookaheadState, float]:
    """Dispatch ``bus`` after holding ``action`` and move it to its next stop on expected values.

    Returns the new state and the headway-deviation cost measured against the
    frozen pre-decision ``reference`` headway.
    """
    e = state.target_stop[bus]
    if action not in model.actions[e - 1]:
        raise ValueError(f"action {action} not available at stop {e}")
    nxt = e % model.n_stops + 1
    arrive = state.time_to_activation_s[bus] + action + model.segment_time[e - 1]
    gap = max(arrive - state.latest_arrival_s[nxt - 1], 0.0)
    dwell = model.per_boarder_s * model.rate_per_min[nxt - 1] * gap / 60.0

    targets = list(state.target_stop)
    targets[bus] = nxt
    tds = list(state.time_to_activation_s)
    tds[bus] = arrive + dwell
    las = list(state.latest_arrival_s)
    las[nxt - 1] = arrive
    new = LookaheadState(tuple(targets), tuple(tds), tuple(las))
    return new, model.cost(new, reference)


@dataclass
class DecisionRecord:
    time_s: float
    bus_id: int
    stop_id: int
    action: float
    costs: dict[float, float] = field(default_factory=dict)  # first-level action -> discounted cost
    activated: tuple[int, ...] = ()  # bus ids activated along the chosen path


def lookahead_value(state: LookaheadState, level: int, stages: int, gamma: float,
                    model: ExpectedModel, reference: float) -> tuple[float, list[int]]:
    """Minimum discounted cost from ``level`` to ``stages``, plus the activated path."""
    bus = activated_bus(state)
    best, best_path = math.inf, []
    for a in model.actions[state.target_stop[bus] - 1]:
        nxt, c = roll_forward_one_level(state, bus, a, model, reference)
        if level < stages:
            tail, path = lookahead_value(nxt, level + 1, stages, gamma, model, reference)
            c = c + gamma * tail
        else:
            path = []
        if c < best:
            best, best_path = c, path
    return best, [bus] + best_path


def decide_nsla(state: SystemState, stages: int, gamma: float, model: ExpectedModel,
                reference: float | None = None) -> tuple[float, DecisionRecord]:
    """Pick the first-level hold minimising the discounted look-ahead cost.

    ``reference`` is the target headway frozen at decision time; by default the
    mean of the current headways.
    """
    if stages < 1:
        raise ValueError("stages must be >= 1")
    bus = state.trigger_bus
    stop = state.target_stop[bus]
    record = DecisionRecord(state.clock_s, state.bus_ids[bus], stop, 0.0)
    if not model.controllable[stop - 1]:
        return 0.0, record
    root = LookaheadState.from_system(state)
    if reference is None:
        h = model.headways(root)
        reference = math.fsum(h) / len(h)
    best, best_a, best_path = math.inf, 0.0, []
    for a in model.actions[stop - 1]:
        nxt, c = roll_forward_one_level(root, bus, a, model, reference)
        path = []
        if stages > 1:
            tail, path = lookahead_value(nxt, 2, stages, gamma, model, reference)
            c = c + gamma * tail
        record.costs[a] = c
        if c < best:
            best, best_a, best_path = c, a, path
    record.action = best_a
    record.activated = tuple(state.bus_ids[i] for i in [bus] + best_path)
    return best_a, record


def decide_no_control(state: SystemState) -> float:
    return 0.0


def decide_tshs(state: SystemState, vmap: VirtualCoordinateMap, esh: float,
                terminal_stops) -> float:
    if state.trigger_stop not in terminal_stops:
        return 0.0
    h = headway_snapshot(state, vmap).headways[state.trigger_bus]
    return 0.0 if h >= esh else esh - h


# -- strategy objects used by the engine ------------------------------------

class NoControl:
    name = "none"
    continuous = False

    def __init__(self, scenario: Scenario | None = None, vmap=None, esh=None):
        pass

    def decide(self, state: SystemState) -> Decision:
        return Decision(decide_no_control(state))


class TerminalHolding:
    name = "tshs"
    continuous = True

    def __init__(self, scenario: Scenario, vmap: VirtualCoordinateMap, esh: float,
                 terminal_stops=None):
        self.vmap = vmap
        self.esh = esh
        self.terminal_stops = frozenset(scenario.control.terminal_stops if terminal_stops is None
                                        else terminal_stops)

    def decide(self, state: SystemState) -> Decision:
        return Decision(decide_tshs(state, self.vmap, self.esh, self.terminal_stops))


class LookaheadHolding:
    name = "nsla"
    continuous = False

    def __init__(self, scenario: Scenario, vmap: VirtualCoordinateMap, esh: float,
                 stages: int | None = None, gamma: float | None = None):
        self.model = ExpectedModel.build(scenario, vmap)
        self.stages = scenario.control.stages if stages is None else stages
        self.gamma = scenario.control.gamma if gamma is None else gamma
        if self.stages < 1:
            raise ValueError("stages must be >= 1")

    def decide(self, state: SystemState) -> Decision:
        a, record = decide_nsla(state, self.stages, self.gamma, self.model)
        return Decision(a, record)


STRATEGY_CLASSES = {"none": NoControl, "tshs": TerminalHolding, "nsla": LookaheadHolding}


def make_strategy(scenario: Scenario, vmap: VirtualCoordinateMap, esh: float):
    """Instantiate the strategy named in ``scenario.control.strategy``."""
    return STRATEGY_CLASSES[scenario.control.strategy](scenario, vmap, esh)
