"""Replication metrics: stability index, holding effort, passenger times, bunching."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .traffic import Passenger

SUMMARY_FIELDS = ("strategy", "stages", "c_H", "sigma_c", "n_T", "a_sum", "a_mean", "a_sd",
                  "bunch_fraction", "n_P", "W_mean", "W_sd", "R_mean", "R_sd", "Tr_mean", "Tr_sd",
                  "sim_s_per_rep", "decision_s_mean")


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _sample_sd(xs: Sequence[float], mean: float | None = None) -> float | None:
    if len(xs) < 2:
        return None
    m = _mean(xs) if mean is None else mean
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))


def stability_index(sigmas: Sequence[float]) -> tuple[float, float | None]:
    """Mean headway dispersion over CTPs and its n-1 standard deviation."""
    if not sigmas:
        raise ValueError("stability index needs at least one CTP")
    c = _mean(sigmas)
    return c, _sample_sd(sigmas, c)


def holding_stats(holds: Sequence[float]) -> tuple[float, float, float]:
    """Total, mean per CTP and n-1 standard deviation of holding times."""
    if not holds:
        return 0.0, 0.0, 0.0
    total = math.fsum(holds)
    mean = total / len(holds)
    sd = _sample_sd(holds, mean)
    return total, mean, 0.0 if sd is None else sd


@dataclass(frozen=True)
class PassengerStats:
    n_P: int
    W_mean: float | None
    W_sd: float | None
    R_mean: float | None
    R_sd: float | None
    Tr_mean: float | None
    Tr_sd: float | None


def passenger_stats(passengers: Iterable[Passenger], horizon_s: float = math.inf) -> PassengerStats:
    done = [p for p in passengers if p.alighted_at_s is not None and p.alighted_at_s <= horizon_s]
    if not done:
        return PassengerStats(0, None, None, None, None, None, None)
    wait = [p.boarded_at_s - p.created_at_s for p in done]
    ride = [p.alighted_at_s - p.boarded_at_s for p in done]
    trip = [w + r for w, r in zip(wait, ride)]
    mw, mr, mt = _mean(wait), _mean(ride), _mean(trip)
    return PassengerStats(len(done), mw, _sample_sd(wait, mw), mr, _sample_sd(ride, mr),
                          mt, _sample_sd(trip, mt))


def detect_bunching(min_headways: Sequence[float], esh: float, threshold_frac: float = 0.15,
                    window_ctps: int = 20) -> bool:
    """True iff the smallest headway stays under ``threshold_frac * esh`` for
    ``window_ctps`` consecutive CTP snapshots."""
    limit = threshold_frac * esh
    run = 0
    for h in min_headways:
        run = run + 1 if h < limit else 0
        if run >= window_ctps:
            return True
    return False


@dataclass(frozen=True)
class ReplicationMetrics:
    c_H: float
    sigma_c: float | None
    n_T: int
    a_sum: float
    a_mean: float
    a_sd: float
    bunched: bool
    n_P: int
    W_mean: float | None
    W_sd: float | None
    R_mean: float | None
    R_sd: float | None
    Tr_mean: float | None
    Tr_sd: float | None
    sim_s: float = 0.0
    decision_s_mean: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def replication_metrics(result, scenario) -> ReplicationMetrics:
    """Reduce an :class:`~holdsim.engine.ReplicationResult` to the reported quantities."""
    sigmas = [c.snapshot.sigma for c in result.ctps]
    holds = [c.holding_s for c in result.ctps]
    if sigmas:
        c_H, sigma_c = stability_index(sigmas)
    else:
        c_H, sigma_c = math.nan, None
    a_sum, a_mean, a_sd = holding_stats(holds)
    bunched = detect_bunching([c.snapshot.min_headway for c in result.ctps], result.esh,
                              scenario.bunching.threshold_frac, scenario.bunching.window_ctps)
    ps = passenger_stats(result.passengers, scenario.observation_period_s)
    dec = [c.decision_s for c in result.ctps]
    return ReplicationMetrics(c_H, sigma_c, len(sigmas), a_sum, a_mean, a_sd, bunched,
                              **asdict(ps), sim_s=result.wall_s,
                              decision_s_mean=_mean(dec) if dec else 0.0)


def aggregate(reps: Sequence[ReplicationMetrics], strategy: str = "", stages: int | None = None
              ) -> dict:
    """Per-field means across replications, one summary row.

    Fields that are undefined in some replication are averaged over the others.
    """
    if not reps:
        raise ValueError("aggregate needs at least one replication")
    row: dict = {"strategy": strategy, "stages": stages}
    for name in ("c_H", "sigma_c", "n_T", "a_sum", "a_mean", "a_sd", "n_P", "W_mean", "W_sd",
                 "R_mean", "R_sd", "Tr_mean", "Tr_sd"):
        vals = [getattr(r, name) for r in reps if getattr(r, name) is not None]
        row[name] = math.fsum(vals) / len(vals) if vals else None
    row["bunch_fraction"] = sum(r.bunched for r in reps) / len(reps)
    row["sim_s_per_rep"] = _mean([r.sim_s for r in reps])
    row["decision_s_mean"] = _mean([r.decision_s_mean for r in reps])
    return {k: row[k] for k in SUMMARY_FIELDS}
