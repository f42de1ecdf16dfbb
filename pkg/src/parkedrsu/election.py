"""Synchronised wake-up of sleeping cars and backoff election of a replacement RSU."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Sequence

CCH_INTERVAL = 0.050


@dataclass(frozen=True)
class WakeSchedule:
    period: float = 15.0
    listen_window: float = CCH_INTERVAL

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"wake period must be positive, got {self.period}")
        if not 0 < self.listen_window <= self.period:
            raise ValueError("listen window must be positive and no longer than the period")

    @property
    def duty_cycle(self) -> float:
        return self.listen_window / self.period


def next_wake(t_now: float, sched: WakeSchedule) -> float:
    """Smallest ``t >= t_now`` with ``t mod period == 0``."""
    k = math.ceil(t_now / sched.period)
    # guard against ceil overshooting on values like 45.000000000001 produced by float sums
    if (k - 1) * sched.period >= t_now:
        k -= 1
    # and against the quotient underflowing to zero for tiny positive times
    while k * sched.period < t_now:
        k += 1
    return k * sched.period


@dataclass
class ElectionState:
    miss_threshold: int = 3
    missed_beacons: int = 0
    backoff_deadline: float | None = None
    candidate_score: float | None = None

    def heard(self, got_beacon: bool) -> bool:
        """Record one wake window; True once the RSU has been missed ``miss_threshold`` times in a row."""
        self.missed_beacons = 0 if got_beacon else self.missed_beacons + 1
        return self.missed_beacons >= self.miss_threshold


def backoff_slot(d_score: float, d_score_max: float, slots: int) -> int:
    if not d_score_max > 0:
        raise ValueError(f"d_score_max must be positive, got {d_score_max}")
    if slots < 1:
        raise ValueError(f"need at least one backoff slot, got {slots}")
    ratio = min(max(d_score, 0.0), d_score_max) / d_score_max
    return math.floor((1.0 - ratio) * slots)


def backoff_time(d_score: float, d_score_max: float, slots: int = 40, t_cch: float = CCH_INTERVAL) -> float:
    return backoff_slot(d_score, d_score_max, slots) * t_cch


@dataclass(frozen=True)
class ElectionParams:
    d_score_max: float
    slots: int = 40
    t_cch: float = CCH_INTERVAL


@dataclass
class ElectionResult:
    winner: str | None
    suppressed: list[str] = field(default_factory=list)
    slot: int | None = None
    backoff: float | None = None
    tied: list[str] = field(default_factory=list)


def run_election(
    candidates: Sequence[tuple[str, float]],
    params: ElectionParams,
    rng: random.Random | int | None = 0,
) -> ElectionResult:
    """Pick the candidate whose backoff timer fires first.

    Candidates sharing the earliest slot contend at the MAC layer, which is
    modelled as a uniform draw from ``rng``.  Everyone else hears the
    winner's beacon and goes back to sleep.
    """
    if not candidates:
        return ElectionResult(None)
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    slots = {cid: backoff_slot(score, params.d_score_max, params.slots) for cid, score in candidates}
    best = min(slots.values())
    tied = sorted(cid for cid, s in slots.items() if s == best)
    winner = tied[0] if len(tied) == 1 else rng.choice(tied)
    suppressed = sorted(cid for cid in slots if cid != winner)
    return ElectionResult(winner, suppressed, best, best * params.t_cch, tied)


def exclusion_fraction(scores: Sequence[float], d_score_max: float, slots: int) -> float:
    """Fraction of candidates outside the winning slot (silently eliminated)."""
    if not scores:
        return 0.0
    s = [backoff_slot(v, d_score_max, slots) for v in scores]
    best = min(s)
    return sum(1 for v in s if v != best) / len(s)
