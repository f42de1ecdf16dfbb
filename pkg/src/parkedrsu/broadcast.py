"""Multi-origin store-carry-forward dissemination of an emergency message.

This is a deliberately simplified store-carry-forward scheme, kept only as
detailed as the reachability comparison needs:

* Links exist between nodes whose link quality is > 0 at a beacon tick.
  A broadcast floods an entire connected cluster within one tick.
* At an *origin* the cluster's edge nodes (convex hull vertices, found by
  gift wrapping) are selected as carriers.  Carriers keep the message and
  rebroadcast it whenever they share a cluster with uninformed nodes.
* Origins are the accident location at creation time and every informed
  active parked RSU.  An RSU is a permanent carrier and re-runs the
  carrier selection over its cluster whenever it informs new nodes.
* Ordinary informed vehicles that were not selected stay silent.

Reachability counts informed moving vehicles only; parked RSUs are relays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .grid import GeoCoord
from .propagation import ObstructionSet, QualityTable, link_matrix
from .scenario import EventKind, Scenario


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def gift_wrap(points: Sequence[tuple[float, float]]) -> list[int]:
    """Indices of convex hull vertices in counter-clockwise order (Jarvis march).

    Points lying in the middle of a hull edge are not vertices.  Duplicate
    positions are reported once, by their lowest index.
    """
    pts = [(float(p[0]), float(p[1])) for p in points]
    first_index: dict[tuple[float, float], int] = {}
    for k, p in enumerate(pts):
        first_index.setdefault(p, k)
    uniq = sorted(first_index)
    if len(uniq) <= 2:
        return [first_index[p] for p in uniq]
    start = uniq[0]  # lowest x, then lowest y: always a hull vertex
    hull = []
    cur = start
    while True:
        hull.append(cur)
        cand = None
        for p in uniq:
            if p == cur:
                continue
            if cand is None:
                cand = p
                continue
            c = _cross(cur, cand, p)
            # p is clockwise of cand, or collinear and farther: wrap tighter
            if c < 0 or (c == 0 and math.dist(cur, p) > math.dist(cur, cand)):
                cand = p
        cur = cand
        if cur == start:
            break
        if len(hull) > len(uniq):  # cannot happen for exact predicates; guard against loops
            raise RuntimeError("gift wrapping failed to close")
    if len(hull) == 2 or all(_cross(hull[0], hull[1], p) == 0 for p in uniq):
        # all points collinear: the two extremes
        ends = [min(uniq), max(uniq)]
        return [first_index[p] for p in ends]
    return [first_index[p] for p in hull]


def select_boundary_nodes(cluster: Sequence[tuple[float, float]]) -> list[int]:
    if len(cluster) == 0:
        raise ValueError("cluster must be non-empty")
    return sorted(gift_wrap(cluster))


@dataclass(frozen=True)
class BroadcastMessage:
    origin: GeoCoord
    created: float = 0.0
    id: str = "msg0"


@dataclass
class ReachabilitySeries:
    times: list[float] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    population: int = 0
    created: float = 0.0

    def append(self, t: float, count: int):
        self.times.append(float(t))
        self.counts.append(int(count))

    def time_to_fraction(self, fraction: float) -> float | None:
        """Delay after creation until ``fraction`` of the population is informed; None if never."""
        if self.population == 0:
            return 0.0
        need = math.ceil(fraction * self.population - 1e-9)
        for t, c in zip(self.times, self.counts):
            if c >= need:
                return t - self.created
        return None


SOURCE_ID = "__source__"


class BroadcastProcess:
    """Per-tick state of one dissemination; drive it with :meth:`start` then :meth:`step`."""

    def __init__(self, obstructions: ObstructionSet, qt: QualityTable = QualityTable()):
        self.obs = obstructions
        self.qt = qt
        self.informed: dict[str, float] = {}
        self.carriers: set[str] = set()
        self.selections = 0

    def _clusters(self, xy: np.ndarray) -> np.ndarray:
        links = link_matrix(xy, self.obs, self.qt) > 0
        _, labels = connected_components(csr_matrix(links), directed=False)
        return labels

    def _select(self, ids: list[str], xy: np.ndarray, members: np.ndarray):
        self.selections += 1
        for k in select_boundary_nodes(xy[members]):
            self.carriers.add(ids[members[k]])

    def start(self, t: float, ids: list[str], xy: np.ndarray, is_rsu: np.ndarray, source: int):
        """Inject the message at node ``source`` (the stationary vehicle at the accident site)."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        labels = self._clusters(xy)
        members = np.nonzero(labels == labels[source])[0]
        for k in members:
            self.informed.setdefault(ids[k], t)
        self.carriers.add(ids[source])
        self._select(ids, xy, members)
        for k in members:
            if is_rsu[k]:
                self.carriers.add(ids[k])

    def step(self, t: float, ids: list[str], xy: np.ndarray, is_rsu: np.ndarray) -> list[str]:
        """Advance one tick; returns the ids newly informed at ``t``."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        if not self.carriers:
            return []
        labels = self._clusters(xy)
        carrier_labels = {labels[k] for k, vid in enumerate(ids) if vid in self.carriers}
        newly: list[str] = []
        touched: dict[int, list[int]] = {}
        for lab in sorted(carrier_labels):
            members = np.nonzero(labels == lab)[0]
            fresh = [k for k in members if ids[k] not in self.informed]
            if fresh:
                touched[lab] = fresh
                for k in fresh:
                    self.informed[ids[k]] = t
                    newly.append(ids[k])
        # an informed RSU acts as a new origin for every cluster that just received the message
        for lab in sorted(touched):
            members = np.nonzero(labels == lab)[0]
            rsus = [k for k in members if is_rsu[k]]
            if rsus:
                for k in rsus:
                    self.carriers.add(ids[k])
                self._select(ids, xy, members)
        return newly


def _rsu_positions(scenario: Scenario, rsu_ids: Iterable[str]) -> dict[str, GeoCoord]:
    wanted = set(rsu_ids)
    pos = {}
    for e in scenario.events:
        if e.vehicle in wanted and e.kind is EventKind.PARK:
            pos[e.vehicle] = e.position
    missing = wanted - set(pos)
    if missing:
        raise ValueError(f"RSU ids without a park event: {sorted(missing)}")
    return pos


def run_broadcast(
    scenario: Scenario,
    rsu_assignment: Iterable[str],
    message: BroadcastMessage,
    until: float | None = None,
    tick: float = 1.0,
    stop_when_full: bool = True,
) -> ReachabilitySeries:
    """Disseminate ``message`` through the scenario's movers plus the listed active parked cars."""
    qt = scenario.config.quality_table()
    rsu_pos = _rsu_positions(scenario, rsu_assignment)
    rsu_ids = sorted(rsu_pos)
    rsu_xy = np.array([rsu_pos[r] for r in rsu_ids], dtype=float).reshape(-1, 2)
    end = scenario.duration if until is None else until
    ticks = np.arange(message.created, end + 1e-9, tick)
    mover_ids, pos = scenario.trace.resample(ticks)
    proc = BroadcastProcess(scenario.obstructions, qt)
    series = ReachabilitySeries(created=message.created)
    movers = set(mover_ids)

    static_ids = rsu_ids + [SOURCE_ID]
    static_xy = np.vstack([rsu_xy, [message.origin]])
    for n, t in enumerate(ticks):
        present = ~np.isnan(pos[n, :, 0])
        n_moving = int(present.sum())
        ids = [mover_ids[k] for k in np.nonzero(present)[0]] + static_ids
        xy = np.vstack([pos[n, present], static_xy])
        is_rsu = np.zeros(len(ids), dtype=bool)
        is_rsu[n_moving:n_moving + len(rsu_ids)] = True
        if n == 0:
            series.population = n_moving
            proc.start(float(t), ids, xy, is_rsu, source=len(ids) - 1)
        else:
            proc.step(float(t), ids, xy, is_rsu)
        count = sum(1 for vid in proc.informed if vid in movers)
        series.append(float(t), count)
        if stop_when_full and series.population and count >= series.population:
            break
    return series


def epidemic_upper_bound(
    scenario: Scenario, rsu_assignment: Iterable[str], message: BroadcastMessage, until: float, tick: float = 1.0
) -> list[set[str]]:
    """Per-tick informed sets when every informed node forwards: the connectivity limit any scheme obeys."""
    qt = scenario.config.quality_table()
    rsu_pos = _rsu_positions(scenario, rsu_assignment)
    rsu_ids = sorted(rsu_pos)
    rsu_xy = np.array([rsu_pos[r] for r in rsu_ids], dtype=float).reshape(-1, 2)
    ticks = np.arange(message.created, until + 1e-9, tick)
    mover_ids, pos = scenario.trace.resample(ticks)
    static_ids = rsu_ids + [SOURCE_ID]
    static_xy = np.vstack([rsu_xy, [message.origin]])
    informed: set[str] = {SOURCE_ID}
    out = []
    for n, t in enumerate(ticks):
        present = ~np.isnan(pos[n, :, 0])
        ids = [mover_ids[k] for k in np.nonzero(present)[0]] + static_ids
        xy = np.vstack([pos[n, present], static_xy])
        # brute force transitive closure over the pairwise link matrix
        adj = link_matrix(xy, scenario.obstructions, qt) > 0
        seed = {k for k, vid in enumerate(ids) if vid in informed}
        reach = set(seed)
        frontier = list(seed)
        while frontier:
            k = frontier.pop()
            for j in np.nonzero(adj[k])[0]:
                if j not in reach:
                    reach.add(int(j))
                    frontier.append(int(j))
        informed |= {ids[k] for k in reach}
        out.append(set(informed) - {SOURCE_ID})
    return out
