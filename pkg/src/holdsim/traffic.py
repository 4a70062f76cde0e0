"""Stochastic building blocks of the line: road travel, signals, demand and dwell."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import DestinationSeries, DwellParams, Intersection, RoadSegment

MIN_TRAVEL_FRAC = 0.1


@dataclass(slots=True)
class Passenger:
    id: int
    origin_stop: int
    destination_stop: int
    created_at_s: float
    boarded_at_s: float | None = None
    alighted_at_s: float | None = None


def expected_travel_time(segment: RoadSegment, cruise_speed_mps: float) -> float:
    return segment.length_m / cruise_speed_mps


def sample_travel_time(segment: RoadSegment, cruise_speed_mps: float, rng) -> float:
    """Mean cruise time plus normal noise, floored at 10% of the mean.

    ``rng`` is anything with a scalar ``standard_normal()``.
    """
    mean = segment.length_m / cruise_speed_mps
    if segment.noise_sd_s == 0:
        return mean
    t = mean + segment.noise_sd_s * float(rng.standard_normal())
    return max(t, MIN_TRAVEL_FRAC * mean)


def signal_delay_at(inter: Intersection, arrival_time_s: float) -> float:
    """Remaining red time at ``arrival_time_s`` (0 on green).

    The initial phase lasts ``initial_phase_remaining_s`` from t=0, then phases
    alternate with their full durations.
    """
    t = arrival_time_s
    first = inter.initial_phase_remaining_s
    if t < first:
        return first - t if inter.initial_phase == "red" else 0.0
    u = math.fmod(t - first, inter.cycle_s) if inter.cycle_s > 0 else 0.0
    if inter.initial_phase == "green":
        # red comes next
        return inter.red_s - u if u < inter.red_s else 0.0
    return inter.cycle_s - u if u >= inter.green_s else 0.0


def expected_signal_delay(inter: Intersection) -> float:
    if inter.cycle_s <= 0:
        return 0.0
    return 0.5 * inter.red_s ** 2 / inter.cycle_s


def generate_passengers(stop_id: int, rate_per_min: float, window: tuple[float, float],
                        series: DestinationSeries, n_stops: int, rng: np.random.Generator,
                        dest_rng: np.random.Generator | None = None, first_id: int = 0) -> list[Passenger]:
    """Poisson arrivals on ``[t1, t2)`` with destinations drawn from ``series``."""
    t1, t2 = window
    if t1 >= t2:
        raise ValueError("window must satisfy t1 < t2")
    if rate_per_min <= 0:
        return []
    dest_rng = rng if dest_rng is None else dest_rng
    count = rng.poisson(rate_per_min / 60.0 * (t2 - t1))
    times = np.sort(rng.uniform(t1, t2, size=count))
    probs = np.asarray(series.probabilities)
    offsets = dest_rng.choice(len(probs), size=count, p=probs / probs.sum()) + 1
    return [
        Passenger(first_id + k, stop_id, (stop_id - 1 + int(off)) % n_stops + 1, float(t))
        for k, (t, off) in enumerate(zip(times, offsets))
    ]


def dwell_time(boarders: int, alighters: int, params: DwellParams | None = None) -> float:
    params = params or DwellParams()
    return max(params.per_boarder_s * boarders, params.per_alighter_s * alighters)


def destination_probability(series: DestinationSeries, offset: int) -> float:
    ps: Sequence[float] = series.probabilities
    return ps[offset - 1] if 1 <= offset <= len(ps) else 0.0
