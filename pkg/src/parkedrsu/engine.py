"""Seeded single-threaded discrete-event loop tying mobility, map learning, decisions and elections together.

Events are ordered by (time, kind priority, insertion order).  At the same
instant departures run before parks, beacons before wake-ups, and
decisions last, so a decision always sees the maps learned up to its time.
"""
from __future__ import annotations

import csv
import hashlib
import heapq
import io
import itertools
import json
import random
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .broadcast import SOURCE_ID, BroadcastMessage, BroadcastProcess, ReachabilitySeries
from .election import ElectionParams, ElectionState, WakeSchedule, backoff_slot, run_election
from .grid import CoverageMap, GeoCoord, cells_of, record_observations
from .oracle import NetworkMetrics, evaluate_subset
from .propagation import ObstructionSet, QualityTable, classify_many
from .scenario import EventKind, Scenario
from .selforg import (
    DecisionWeights,
    Mode,
    NodeState,
    build_local_maps,
    decide,
    decision_score,
    on_map_update,
    score_metrics,
)

COMPLETE_FRACTION = 0.8


class SimulationInvariantError(RuntimeError):
    """An internal consistency check failed; the run is aborted."""


class EventType(IntEnum):
    # value doubles as same-time priority
    DEPART = 0
    PARK = 1
    BEACON_TICK = 2
    WAKE_WINDOW = 3
    BACKOFF_EXPIRY = 4
    DECISION_DUE = 5
    BROADCAST_CONTACT = 6


@dataclass(order=True)
class Event:
    time: float
    kind: EventType
    seq: int
    payload: Any = field(compare=False, default=None)


class EventQueue:
    def __init__(self):
        self._heap: list[Event] = []
        self._seq = itertools.count()
        self.now = float("-inf")

    def push(self, time: float, kind: EventType, payload=None):
        if time < self.now:
            raise SimulationInvariantError(f"event {kind.name} scheduled in the past ({time} < {self.now})")
        heapq.heappush(self._heap, Event(float(time), kind, next(self._seq), payload))

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        if ev.time < self.now:
            raise SimulationInvariantError(f"causality violated: {ev.kind.name} at {ev.time} after {self.now}")
        self.now = ev.time
        return ev

    def __len__(self):
        return len(self._heap)


def coverage_from_points(
    center: tuple[float, float],
    points: np.ndarray,
    obs: ObstructionSet,
    qt: QualityTable,
    cell_size: float,
    order: int,
) -> CoverageMap:
    """The map a car parked at ``center`` would learn from beacons sent at ``points``."""
    m = CoverageMap.empty(center, order, cell_size)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        return m
    d = np.hypot(points[:, 0] - center[0], points[:, 1] - center[1])
    points = points[d <= qt.max_range]
    if len(points) == 0:
        return m
    levels = classify_many(np.repeat([center], len(points), axis=0), points, obs, qt)
    keep = levels > 0
    m, _ = record_observations(m, cells_of(points[keep], cell_size), levels[keep])
    return CoverageMap(m.cells, m.center, m.cell_size)


def completeness(scm: CoverageMap, oracle_map: CoverageMap) -> float:
    target = oracle_map.nonzero_cells()
    if not target:
        return 1.0
    return len(scm.nonzero_cells() & target) / len(target)


@dataclass
class ParkedCar:
    state: NodeState
    position: GeoCoord
    park_time: float
    oracle: CoverageMap
    watch: dict[str, ElectionState] = field(default_factory=dict)
    cached_maps: dict[str, CoverageMap] = field(default_factory=dict)
    completeness: list[tuple[float, float]] = field(default_factory=list)
    departed: float | None = None


@dataclass
class RunArtifacts:
    nodes: dict[str, ParkedCar]
    decisions: list[dict]
    elections: list[dict]
    rsu_counts: list[tuple[float, int]]
    final_metrics: NetworkMetrics
    manifest: dict
    reachability: ReachabilitySeries | None = None
    invariant_checks: int = 0

    def time_to_complete(self, fraction: float = COMPLETE_FRACTION) -> dict[str, float | None]:
        """Seconds after parking until each car's map reached ``fraction`` completeness."""
        out = {}
        for vid, car in sorted(self.nodes.items()):
            if not car.oracle.nonzero_cells():
                continue
            out[vid] = next((t for t, c in car.completeness if c >= fraction - 1e-12), None)
        return out

    def active_ids(self) -> list[str]:
        return sorted(v for v, c in self.nodes.items() if c.departed is None and c.state.mode is Mode.ACTIVE)

    # -- serialisation -------------------------------------------------------------
    def tables(self) -> dict[str, str]:
        files = {}
        files["decisions.csv"] = _csv(
            ["time", "node", "trigger", "d_new", "d_boost", "d_sat", "score", "outcome"], self.decisions
        )
        files["elections.csv"] = _csv(
            ["time", "displaced", "candidates", "slots", "winner", "backoff", "suppressed"], self.elections
        )
        files["rsu_count.csv"] = _csv(["time", "active"], [{"time": t, "active": n} for t, n in self.rsu_counts])
        rows = []
        for vid, car in sorted(self.nodes.items()):
            for t, c in car.completeness:
                rows.append({"node": vid, "elapsed": t, "completeness": round(c, 6)})
        files["completeness.csv"] = _csv(["node", "elapsed", "completeness"], rows)
        nodes = []
        for vid, car in sorted(self.nodes.items()):
            s = car.state
            nodes.append({
                "node": vid,
                "mode": "departed" if car.departed is not None else s.mode.value,
                "x": car.position.x,
                "y": car.position.y,
                "park_time": car.park_time,
                "covered_cells": s.scm.coverage_count(),
                "decisions": s.decisions,
                "last_score": s.last_decision_score,
            })
        files["nodes.csv"] = _csv(list(nodes[0]) if nodes else ["node"], nodes)
        if self.reachability is not None:
            r = self.reachability
            files["reachability.csv"] = _csv(
                ["t", "count"], [{"t": t, "count": c} for t, c in zip(r.times, r.counts)]
            )
        t80 = self.time_to_complete()
        summary = {
            "final_metrics": self.final_metrics._asdict(),
            "active_rsus": self.active_ids(),
            "decisions": len(self.decisions),
            "elections": len(self.elections),
            "time_to_80pct_map": t80,
        }
        if self.reachability is not None:
            summary["reachability"] = {
                "population": self.reachability.population,
                "time_to_90pct": self.reachability.time_to_fraction(0.9),
                "time_to_100pct": self.reachability.time_to_fraction(1.0),
            }
        files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
        return files

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = self.tables()
        digests = {}
        for name, text in sorted(files.items()):
            (out / name).write_text(text)
            digests[name] = hashlib.sha256(text.encode()).hexdigest()
        manifest = dict(self.manifest, outputs=digests)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return out


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 6))
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return "" if v is None else str(v)


def _csv(header: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r.get(h)) for h in header])
    return buf.getvalue()


class Simulation:
    def __init__(self, scenario: Scenario, message: BroadcastMessage | None = None):
        self.sc = scenario
        cfg = scenario.config
        self.cfg = cfg
        self.qt = cfg.quality_table()
        self.weights = DecisionWeights(cfg.kappa, cfg.lam, cfg.mu)
        self.rng = random.Random(cfg.rng_seed)
        self.loss_rng = np.random.default_rng(cfg.rng_seed)
        self.sched = WakeSchedule(cfg.wake_period, cfg.cch_interval)
        self.queue = EventQueue()
        self.cars: dict[str, ParkedCar] = {}
        self.parked_now: set[str] = set()
        self.decisions: list[dict] = []
        self.elections: list[dict] = []
        self.rsu_counts: list[tuple[float, int]] = []
        self.d_score_max = cfg.d_score_max
        self.observed_max = 1.0
        self.checks = 0
        self.message = message
        self.broadcast = BroadcastProcess(scenario.obstructions, self.qt) if message else None
        self.reach = ReachabilitySeries(created=message.created) if message else None

        step = 1.0 / cfg.beacon_rate
        self.ticks = np.arange(0.0, scenario.duration + 1e-9, step)
        self.mover_ids, self.mover_pos = scenario.trace.resample(self.ticks)
        self.mover_index = {v: k for k, v in enumerate(self.mover_ids)}
        self._parks_seen: dict[str, int] = {}
        self._departs_seen: dict[str, int] = {}

    # -- helpers ---------------------------------------------------------------------
    def _movers_at(self, n: int) -> tuple[list[str], np.ndarray]:
        pos = self.mover_pos[n]
        live = ~np.isnan(pos[:, 0])
        idx = [k for k in np.nonzero(live)[0] if self.mover_ids[k] not in self.parked_now]
        return [self.mover_ids[k] for k in idx], pos[idx]

    def _active(self) -> list[str]:
        return sorted(v for v in self.parked_now if self.cars[v].state.mode is Mode.ACTIVE)

    def _link(self, a: GeoCoord, b: GeoCoord) -> int:
        return int(classify_many(np.array([a]), np.array([b]), self.sc.obstructions, self.qt)[0])

    def _neighbor_rsus(self, vid: str, exclude: set[str] = frozenset()) -> list[str]:
        me = self.cars[vid].position
        return [r for r in self._active() if r != vid and r not in exclude and self._link(me, self.cars[r].position) > 0]

    def _neighbor_maps(self, vid: str, exclude: set[str] = frozenset()) -> list[CoverageMap]:
        return [self.cars[r].state.scm for r in self._neighbor_rsus(vid, exclude)]

    def _threshold(self) -> int | None:
        return self.cfg.delta_cov_threshold

    def _log_decision(self, t: float, vid: str, trigger: str):
        s = self.cars[vid].state
        m = s.last_metrics
        self.observed_max = max(self.observed_max, s.last_decision_score)
        self.decisions.append({
            "time": t, "node": vid, "trigger": trigger,
            "d_new": m.d_new, "d_boost": m.d_boost, "d_sat": m.d_sat,
            "score": float(s.last_decision_score), "outcome": s.mode.value,
        })

    def _note_rsu_count(self, t: float):
        n = len(self._active())
        if not self.rsu_counts or self.rsu_counts[-1][1] != n:
            if self.rsu_counts and self.rsu_counts[-1][0] == t:
                self.rsu_counts[-1] = (t, n)
            else:
                self.rsu_counts.append((t, n))

    def _go_to_sleep(self, t: float, vid: str, used: list[str]):
        car = self.cars[vid]
        car.watch = {r: ElectionState(self.cfg.miss_threshold) for r in used}
        car.cached_maps = {r: self.cars[r].state.scm for r in used}

    def _stand_down(self, vid: str):
        # an RSU that re-decides to sleep announces it, so nobody elects a replacement for it
        for car in self.cars.values():
            car.watch.pop(vid, None)
            car.cached_maps.pop(vid, None)

    # -- event handlers --------------------------------------------------------------
    def on_park(self, t: float, vid: str, pos: GeoCoord):
        self._parks_seen[vid] = self._parks_seen.get(vid, 0) + 1
        cfg = self.cfg
        scm = CoverageMap.empty(pos, cfg.map_order, cfg.cell_size)
        # oracle: everything classifiable from the trace while this car stays parked
        end = self._depart_time(vid, t)
        span = (self.ticks >= t) & (self.ticks <= end)
        pts = self.mover_pos[span].reshape(-1, 2)
        pts = pts[~np.isnan(pts[:, 0])]
        oracle = coverage_from_points(pos, pts, self.sc.obstructions, self.qt, cfg.cell_size, cfg.map_order)
        state = NodeState(vid, scm, Mode.LISTENING)
        self.cars[vid] = ParkedCar(state, pos, t, oracle, completeness=[(0.0, completeness(scm, oracle))])
        self.parked_now.add(vid)
        self.queue.push(t + cfg.listen_duration, EventType.DECISION_DUE, vid)

    def _depart_time(self, vid: str, t: float) -> float:
        for e in self.sc.events:
            if e.vehicle == vid and e.kind is EventKind.DEPART and e.time >= t:
                return e.time
        return self.sc.duration

    def on_depart(self, t: float, vid: str):
        self._departs_seen[vid] = self._departs_seen.get(vid, 0) + 1
        self.checks += 1
        if self._departs_seen[vid] > self._parks_seen.get(vid, 0):
            raise SimulationInvariantError(f"{vid} departed more often than it parked")
        car = self.cars[vid]
        car.departed = t
        self.parked_now.discard(vid)
        car.watch.clear()
        self._note_rsu_count(t)

    def on_decision(self, t: float, vid: str):
        car = self.cars.get(vid)
        if car is None or car.departed is not None or car.state.mode is not Mode.LISTENING:
            return
        used = self._neighbor_rsus(vid)
        decide(car.state, [self.cars[r].state.scm for r in used], self.weights,
               self.cfg.activation_threshold, self._threshold())
        self._log_decision(t, vid, "parked")
        if car.state.mode is Mode.SLEEPING:
            self._go_to_sleep(t, vid, used)
        self._note_rsu_count(t)

    def on_beacon_tick(self, t: float, n: int):
        ids, xy = self._movers_at(n)
        listeners = sorted(
            v for v in self.parked_now if self.cars[v].state.mode in (Mode.LISTENING, Mode.ACTIVE, Mode.CANDIDATE)
        )
        if listeners and len(ids):
            lp = np.array([self.cars[v].position for v in listeners], dtype=float)
            d = np.hypot(lp[:, None, 0] - xy[None, :, 0], lp[:, None, 1] - xy[None, :, 1])
            li, mi = np.nonzero(d <= self.qt.max_range)
            levels = classify_many(lp[li], xy[mi], self.sc.obstructions, self.qt)
            if self.cfg.beacon_loss is not None and len(levels):
                drop = self.loss_rng.random(len(levels)) < np.asarray(self.cfg.beacon_loss)[levels]
                levels = np.where(drop, 0, levels)
            cells = cells_of(xy[mi], self.cfg.cell_size) if len(mi) else np.zeros((0, 2), dtype=np.int64)
            for k, vid in enumerate(listeners):
                sel = (li == k) & (levels > 0)
                if not sel.any():
                    continue
                car = self.cars[vid]
                new_map, changed = record_observations(car.state.scm, cells[sel], levels[sel])
                car.state.scm = new_map
                if changed:
                    car.completeness.append((t - car.park_time, completeness(new_map, car.oracle)))
                    if car.state.mode is Mode.ACTIVE:
                        before = car.state.decisions
                        on_map_update(
                            car.state, changed, lambda v=vid: self._neighbor_maps(v), self.weights,
                            self.cfg.activation_threshold, self._threshold(),
                        )
                        if car.state.decisions != before:
                            self._log_decision(t, vid, "delta_cov")
                            if car.state.mode is Mode.SLEEPING:
                                self._stand_down(vid)
                                self._go_to_sleep(t, vid, self._neighbor_rsus(vid))
        self._note_rsu_count(t)
        if self.broadcast is not None and t >= self.message.created:
            self.on_broadcast(t, ids, xy)

    def on_broadcast(self, t: float, ids: list[str], xy: np.ndarray):
        rsus = self._active()
        all_ids = list(ids) + rsus + [SOURCE_ID]
        rsu_xy = np.array([self.cars[r].position for r in rsus], dtype=float).reshape(-1, 2)
        all_xy = np.vstack([np.asarray(xy).reshape(-1, 2), rsu_xy, [self.message.origin]])
        is_rsu = np.zeros(len(all_ids), dtype=bool)
        is_rsu[len(ids):len(ids) + len(rsus)] = True
        if not self.reach.times:
            self.reach.population = len(ids)
            self._bcast_population = set(ids)
            self.broadcast.start(t, all_ids, all_xy, is_rsu, source=len(all_ids) - 1)
        else:
            self.broadcast.step(t, all_ids, all_xy, is_rsu)
        self.reach.append(t, sum(1 for v in self.broadcast.informed if v in self._bcast_population))

    def on_wake(self, t: float):
        sleepers = sorted(v for v in self.parked_now if self.cars[v].state.mode is Mode.SLEEPING)
        if not sleepers:
            return
        active = self._active()
        detections: dict[str, list[str]] = {}
        for vid in sleepers:
            car = self.cars[vid]
            heard = {r for r in active if self._link(car.position, self.cars[r].position) > 0}
            for r in sorted(heard):
                car.cached_maps[r] = self.cars[r].state.scm
                car.watch.setdefault(r, ElectionState(self.cfg.miss_threshold))
            for r, st in sorted(car.watch.items()):
                if st.heard(r in heard):
                    detections.setdefault(r, []).append(vid)
        claimed: set[str] = set()
        for displaced in sorted(detections):
            self._elect(t, displaced, [v for v in detections[displaced] if v not in claimed], claimed)

    def _elect(self, t: float, displaced: str, detectors: list[str], claimed: set[str]):
        d_max = self.d_score_max if self.d_score_max is not None else self.observed_max
        scores = []
        for vid in detectors:
            car = self.cars[vid]
            car.watch.pop(displaced, None)
            maps = [m for r, m in sorted(car.cached_maps.items()) if r != displaced and r in self.parked_now
                    and self.cars[r].state.mode is Mode.ACTIVE]
            car.cached_maps.pop(displaced, None)
            metrics = score_metrics(car.state.scm, build_local_maps(maps))
            scores.append((vid, decision_score(metrics, self.weights), metrics))
        eligible = [(v, s) for v, s, _ in scores if s > self.cfg.activation_threshold]
        params = ElectionParams(d_max, self.cfg.backoff_slots, self.cfg.cch_interval)
        result = run_election(eligible, params, self.rng)
        self.elections.append({
            "time": t, "displaced": displaced, "candidates": [v for v, _ in eligible],
            "slots": [backoff_slot(s, d_max, params.slots) for _, s in eligible],
            "winner": result.winner, "backoff": result.backoff, "suppressed": result.suppressed,
        })
        if result.winner is None:
            return
        for vid, _ in eligible:
            self.cars[vid].state.mode = Mode.CANDIDATE
            claimed.add(vid)
        self.queue.push(t + result.backoff, EventType.BACKOFF_EXPIRY,
                        (result.winner, result.suppressed, {v: (s, m) for v, s, m in scores}))

    def on_backoff(self, t: float, payload):
        winner, suppressed, scored = payload
        for vid in suppressed:
            car = self.cars[vid]
            if car.departed is None and car.state.mode is Mode.CANDIDATE:
                car.state.mode = Mode.SLEEPING
        car = self.cars[winner]
        if car.departed is not None:
            return
        score, metrics = scored[winner]
        s = car.state
        s.mode = Mode.ACTIVE
        s.last_metrics = metrics
        s.last_decision_score = score
        s.delta_cov = 0
        s.decisions += 1
        car.watch.clear()
        self._log_decision(t, winner, "election")
        self._note_rsu_count(t)

    # -- main loop -------------------------------------------------------------------
    def run(self) -> RunArtifacts:
        q = self.queue
        for e in self.sc.events:
            if e.time > self.sc.duration:
                continue
            kind = EventType.PARK if e.kind is EventKind.PARK else EventType.DEPART
            q.push(e.time, kind, e)
        for n, t in enumerate(self.ticks):
            q.push(float(t), EventType.BEACON_TICK, n)
        k = 0
        while k * self.sched.period <= self.sc.duration:
            q.push(k * self.sched.period, EventType.WAKE_WINDOW)
            k += 1
        while len(q):
            ev = q.pop()
            if ev.time > self.sc.duration:
                break
            self.checks += 1
            if ev.kind is EventType.PARK:
                self.on_park(ev.time, ev.payload.vehicle, ev.payload.position)
            elif ev.kind is EventType.DEPART:
                self.on_depart(ev.time, ev.payload.vehicle)
            elif ev.kind is EventType.BEACON_TICK:
                self.on_beacon_tick(ev.time, ev.payload)
            elif ev.kind is EventType.WAKE_WINDOW:
                self.on_wake(ev.time)
            elif ev.kind is EventType.BACKOFF_EXPIRY:
                self.on_backoff(ev.time, ev.payload)
            elif ev.kind is EventType.DECISION_DUE:
                self.on_decision(ev.time, ev.payload)
        return self._artifacts()

    def _artifacts(self) -> RunArtifacts:
        present = sorted(self.parked_now)
        maps = [self.cars[v].state.scm for v in present]
        active = [self.cars[v].state.mode is Mode.ACTIVE for v in present]
        metrics = evaluate_subset(maps, active) if maps else NetworkMetrics(0.0, 0.0, 0)
        manifest = {
            "scenario_digest": self.sc.digest(),
            "seed": self.cfg.rng_seed,
            "code_version": __version__,
            "config": self.cfg.to_dict(),
        }
        if self.message is not None:
            manifest["message"] = {"origin": list(self.message.origin), "created": self.message.created}
        return RunArtifacts(
            nodes=self.cars,
            decisions=self.decisions,
            elections=self.elections,
            rsu_counts=self.rsu_counts,
            final_metrics=metrics,
            manifest=manifest,
            reachability=self.reach,
            invariant_checks=self.checks,
        )


def run(scenario: Scenario, message: BroadcastMessage | None = None) -> RunArtifacts:
    return Simulation(scenario, message).run()
