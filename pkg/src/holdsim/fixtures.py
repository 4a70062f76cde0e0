"""Built-in scenario fixtures.

``he2019`` is the 30-stop, 9-bus circular test line (17.95 km, 13 signalized
intersections) used throughout the test-suite and the canned experiment tables.
"""

from __future__ import annotations

import math

from .scenario import Scenario, ScenarioError, scenario_from_document

# bus line segment -> road segment ids and lengths (m)
_SEGMENTS = {
    1: ((1, 2), (200, 400)), 2: ((3,), (500,)), 3: ((4,), (600,)),
    4: ((5, 6), (260, 350)), 5: ((7,), (530,)), 6: ((8,), (560,)),
    7: ((9,), (600,)), 8: ((10, 11), (300, 500)), 9: ((12,), (600,)),
    10: ((13, 14), (300, 350)), 11: ((15,), (600,)), 12: ((16, 17), (300, 400)),
    13: ((18, 19), (300, 320)), 14: ((20,), (500,)), 15: ((21,), (450,)),
    16: ((22, 23, 24), (200, 250, 100)), 17: ((25,), (570,)), 18: ((26,), (610,)),
    19: ((27,), (600,)), 20: ((28, 29), (300, 350)), 21: ((30, 31), (200, 400)),
    22: ((32,), (500,)), 23: ((33,), (600,)), 24: ((34, 35), (260, 350)),
    25: ((36,), (530,)), 26: ((37,), (560,)), 27: ((38,), (600,)),
    28: ((39, 40), (300, 500)), 29: ((41,), (600,)), 30: ((42, 43), (300, 350)),
}

# id: (red, green, remaining time of initial phase, initial phase 1=red 2=green, host segment)
_SIGNALS = {
    1: (40, 50, 20, 2, 1), 2: (40, 30, 20, 1, 4), 3: (40, 35, 20, 1, 8),
    4: (30, 45, 20, 2, 10), 5: (30, 30, 20, 2, 12), 6: (40, 30, 20, 1, 13),
    7: (40, 45, 30, 2, 16), 8: (30, 35, 20, 2, 16), 9: (30, 45, 20, 2, 20),
    10: (40, 50, 10, 2, 21), 11: (40, 30, 20, 1, 24), 12: (40, 35, 10, 1, 28),
    13: (30, 45, 20, 2, 30),
}

_RATES = {
    1: (2, 4, 6, 8, 13, 16, 17, 19, 24, 26, 28),
    2: (1, 3, 5, 7, 10, 12, 14, 15, 18, 21, 22, 23, 25),
    3: (9, 11, 27, 29),
    4: (20, 30),
}

SERIES_1_STOPS = (1, 7, 10, 13, 20, 21, 27, 30)

# as printed; series 1 sums to 0.9999 and is renormalized below
SERIES_1 = (0.0135, 0.027, 0.0541, 0.0811, 0.1081, 0.1351, 0.1351, 0.1216, 0.1216,
            0.0811, 0.0541, 0.0405, 0.0270)
SERIES_2 = (0.0345, 0.0862, 0.1207, 0.1552, 0.1724, 0.1552, 0.1207, 0.0862, 0.0517, 0.0172)

_BUSES = (
    # id, capacity, initial target stop, RTBA (s)
    (1, 72, 1, 20), (2, 70, 4, 0), (3, 80, 8, 40), (4, 60, 11, 30), (5, 72, 15, 50),
    (6, 60, 18, 10), (7, 72, 21, 30), (8, 80, 25, 35), (9, 60, 28, 25),
)

ACTION_SETS = {
    1: (0, 2, 4, 6, 8, 10),
    2: (0, 3, 6, 9, 12, 15),
    3: (0, 2, 4, 6),
    4: (0, 5, 10, 15),
    5: tuple(range(11)),
    6: tuple(range(16)),
}

CONTROL_POINT_SETS = {
    "11BS": (2, 3, 5, 11, 15, 16, 17, 20, 21, 25, 29),
    "9BS": (2, 5, 11, 15, 16, 20, 21, 25, 29),
    "7BS": (2, 11, 15, 16, 20, 25, 29),
    "5BS": (11, 15, 16, 20, 25),
    "3BS": (11, 16, 25),
}

TSHS_TERMINALS = (5, 20)


def _normalized(ps):
    total = math.fsum(ps)
    return [p / total for p in ps]


def he2019_document() -> dict:
    """The test line as a scenario document (see :mod:`holdsim.scenario`)."""
    rate_of = {s: r for r, stops in _RATES.items() for s in stops}
    by_segment: dict[int, list[int]] = {}
    for iid, sig in _SIGNALS.items():
        by_segment.setdefault(sig[4], []).append(iid)

    segments, roads = [], []
    for g, (rids, lengths) in _SEGMENTS.items():
        inters = sorted(by_segment.get(g, []))
        elements = []
        for k, (rid, length) in enumerate(zip(rids, lengths)):
            if k:
                elements.append({"intersection": inters[k - 1]})
            elements.append({"road": rid})
            roads.append({"id": rid, "length_m": float(length)})
        segments.append({"id": g, "from_stop": g, "elements": elements})

    controlled = set(CONTROL_POINT_SETS["11BS"])
    return {
        "line": {"cruise_speed_kmh": 36.0, "observation_period_s": 14400.0},
        "stops": [{"id": s, "rate_per_min": float(rate_of[s]),
                   "series": 1 if s in SERIES_1_STOPS else 2,
                   "controllable": s in controlled} for s in range(1, 31)],
        "road_segments": roads,
        "bus_line_segments": segments,
        "intersections": [{"id": i, "red_s": float(r), "green_s": float(gr),
                           "initial_phase": "red" if ph == 1 else "green",
                           "initial_phase_remaining_s": float(orr)}
                          for i, (r, gr, orr, ph, _) in _SIGNALS.items()],
        "buses": [{"id": b, "capacity": c, "initial_stop": e, "rtba_s": float(t)}
                  for b, c, e, t in _BUSES],
        "series": [{"id": 1, "probabilities": _normalized(SERIES_1)},
                   {"id": 2, "probabilities": list(SERIES_2)}],
        "action_sets": [{"id": k, "holding_times_s": [float(x) for x in v]}
                        for k, v in ACTION_SETS.items()],
        "control": {"strategy": "nsla", "stages": 3, "gamma": 0.5, "action_set": 1,
                    "terminal_stops": list(TSHS_TERMINALS)},
        "dwell": {"per_boarder_s": 1.0, "per_alighter_s": 0.5, "mode": "board_at_release"},
        "bunching": {"threshold_frac": 0.15, "window_ctps": 20},
    }


_FIXTURES = {"he2019": he2019_document}


def builtin_fixture(name: str) -> Scenario:
    try:
        build = _FIXTURES[name]
    except KeyError:
        raise ScenarioError(f"unknown fixture {name!r}; known: {sorted(_FIXTURES)}") from None
    return scenario_from_document(build())
