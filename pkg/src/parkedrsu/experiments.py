"""Batch experiments: greedy versus exhaustive selection, weight sweeps, broadcast
assistance and map-build speed.  Every function is a pure function of its
arguments (seeds included), so results are reproducible run to run."""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .broadcast import BroadcastMessage, run_broadcast
from .engine import COMPLETE_FRACTION, coverage_from_points, run
from .grid import CoverageMap, GeoCoord
from .oracle import NetworkMetrics, Objective, brute_force_optimal, evaluate_subset, objective_value
from .propagation import ObstructionSet, QualityTable, link_matrix
from .scenario import EventKind, ParkingEvent, Scenario, ScenarioConfig, synthesize
from .selforg import DecisionWeights, Mode, NodeState, decide

TABLE_AREA_KM2 = 0.18


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """``map`` that fans out to worker processes; results keep the input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- greedy versus optimal ----------------------------------------------------------

def complete_maps(scenario: Scenario, positions: Sequence[tuple[float, float]], spacing: float = 5.0) -> list[CoverageMap]:
    """Maps a car at each position learns once a beacon has arrived from every road point."""
    cfg = scenario.config
    pts = scenario.road_points(spacing)
    qt = cfg.quality_table()
    return [coverage_from_points(p, pts, scenario.obstructions, qt, cfg.cell_size, cfg.map_order) for p in positions]


def greedy_selection(
    positions: Sequence[tuple[float, float]],
    maps: Sequence[CoverageMap],
    obs: ObstructionSet,
    qt: QualityTable,
    weights: DecisionWeights = DecisionWeights(),
    threshold: float = 0.0,
) -> list[bool]:
    """Cars decide one after another in the given (arrival) order, each seeing only the
    active cars it can hear directly."""
    links = link_matrix(np.asarray(positions, dtype=float).reshape(-1, 2), obs, qt) > 0
    active: list[bool] = []
    for k, m in enumerate(maps):
        heard = [maps[j] for j in range(k) if active[j] and links[k, j]]
        node = NodeState(str(k), m, Mode.LISTENING)
        active.append(decide(node, heard, weights, threshold) is Mode.ACTIVE)
    return active


@dataclass(frozen=True)
class Comparison:
    greedy: NetworkMetrics
    optimal: NetworkMetrics
    greedy_active: tuple[bool, ...]
    optimal_active: tuple[bool, ...]

    @property
    def coverage_ratio(self) -> float:
        if self.optimal.mean_signal == 0:
            return 1.0
        return self.greedy.mean_signal / self.optimal.mean_signal

    @property
    def count_ratio(self) -> float:
        if self.optimal.rsu_count == 0:
            return 1.0 if self.greedy.rsu_count == 0 else math.inf
        return self.greedy.rsu_count / self.optimal.rsu_count

    def to_dict(self) -> dict:
        return {
            "greedy": self.greedy._asdict(),
            "optimal": self.optimal._asdict(),
            "greedy_active": list(self.greedy_active),
            "optimal_active": list(self.optimal_active),
            "coverage_ratio": self.coverage_ratio,
            "count_ratio": self.count_ratio,
        }


def arrival_order(scenario: Scenario) -> list[ParkingEvent]:
    """First park event of every vehicle, in event order."""
    seen: dict[str, ParkingEvent] = {}
    for e in scenario.events:
        if e.kind is EventKind.PARK and e.vehicle not in seen:
            seen[e.vehicle] = e
    return list(seen.values())


def compare_greedy_vs_optimal(
    scenario: Scenario,
    objective: Objective = Objective(),
    cap: int = 24,
) -> Comparison:
    cfg = scenario.config
    parks = arrival_order(scenario)
    positions = [e.position for e in parks]
    maps = complete_maps(scenario, positions)
    qt = cfg.quality_table()
    greedy = greedy_selection(
        positions, maps, scenario.obstructions, qt, DecisionWeights(cfg.kappa, cfg.lam, cfg.mu), cfg.activation_threshold
    )
    best = brute_force_optimal(maps, objective, cap)
    return Comparison(evaluate_subset(maps, greedy), best.metrics, tuple(greedy), best.active)


def random_instance(seed: int, n_candidates: int = 12, area_km2: float = TABLE_AREA_KM2,
                    config: ScenarioConfig | None = None) -> Scenario:
    """Street grid of the given area with ``n_candidates`` cars parked at random on the roads."""
    return synthesize(1.0, area_km2, 1.0, parked=n_candidates, seed=seed, config=config)


def _compare_one(args) -> dict:
    seed, n, objective, config = args
    c = compare_greedy_vs_optimal(random_instance(seed, n, config=config), objective)
    return dict(c.to_dict(), seed=seed)


def greedy_vs_optimal_study(
    seeds: Iterable[int] = range(30),
    n_candidates: int = 12,
    objective: Objective = Objective(),
    config: ScenarioConfig | None = None,
    workers: int = 1,
) -> dict:
    rows = parallel_map(_compare_one, [(s, n_candidates, objective, config) for s in seeds], workers)
    cov = [r["coverage_ratio"] for r in rows]
    cnt = [r["count_ratio"] for r in rows]
    return {
        "instances": rows,
        "n_candidates": n_candidates,
        "mean_coverage_ratio": float(np.mean(cov)),
        "min_coverage_ratio": float(np.min(cov)),
        "mean_count_ratio": float(np.mean(cnt)),
        "max_count_ratio": float(np.max(cnt)),
    }


def clustered_fixture(n_clusters: int = 4, per_cluster: int = 6, seed: int = 0, spacing: float = 6.0,
                      area_km2: float = TABLE_AREA_KM2) -> tuple[Scenario, list[GeoCoord]]:
    """Cars parked bumper to bumper in a few groups along the streets of a small grid."""
    sc = synthesize(1.0, area_km2, 1.0, parked=0, seed=seed)
    rng = np.random.default_rng(seed)
    segs = np.asarray(sc.roads, dtype=float)
    pos = []
    for _ in range(n_clusters):
        x1, y1, x2, y2 = segs[rng.integers(len(segs))]
        f = rng.uniform(0.2, 0.5)
        length = math.hypot(x2 - x1, y2 - y1)
        for k in range(per_cluster):
            g = f + k * spacing / length
            pos.append(GeoCoord(float(x1 + g * (x2 - x1)), float(y1 + g * (y2 - y1))))
    events = tuple(ParkingEvent(0.0, f"p{k:03d}", EventKind.PARK, p) for k, p in enumerate(pos))
    return dataclasses.replace(sc, events=events), pos


def clustered_optimum(objective: Objective = Objective(), **fixture) -> dict:
    """All-active versus exhaustive optimum on :func:`clustered_fixture`."""
    sc, pos = clustered_fixture(**fixture)
    maps = complete_maps(sc, pos)
    everyone = evaluate_subset(maps, [True] * len(maps))
    best = brute_force_optimal(maps, objective)
    return {
        "candidates": len(maps),
        "all_active": everyone._asdict(),
        "optimal": best.metrics._asdict(),
        "optimal_mask": best.mask,
        "saturation_ratio": everyone.mean_saturation / best.metrics.mean_saturation,
        "signal_gap": 1.0 - best.metrics.mean_signal / everyone.mean_signal,
        "objective_value": objective_value(best.metrics, objective),
    }


# -- weight sweep --------------------------------------------------------------------

def sweep_scenario(seed: int, density: float = 40.0, area_km2: float = 0.25, parked: int = 20,
                   duration: float = 420.0, listen: float = 300.0) -> Scenario:
    """Default sweep workload: all cars park at once, decide after ``listen`` seconds."""
    cfg = ScenarioConfig(listen_duration=listen, rng_seed=seed)
    return synthesize(density, area_km2, duration, parked=parked, seed=seed, config=cfg)


def _sweep_one(args) -> NetworkMetrics:
    scenario, (kappa, lam, mu) = args
    return run(scenario.with_config(kappa=kappa, lam=lam, mu=mu)).final_metrics


def sweep(
    grid: Sequence[tuple[float, float, float]],
    scenarios: Sequence[Scenario],
    workers: int = 1,
) -> list[dict]:
    """One row per weight triple, metrics averaged over the same ``scenarios``."""
    grid = [tuple(float(v) for v in g) for g in grid]
    if not grid:
        raise ValueError("weights grid is empty")
    if not scenarios:
        raise ValueError("no scenarios to evaluate")
    jobs = [(sc, g) for g in grid for sc in scenarios]
    results = parallel_map(_sweep_one, jobs, workers)
    rows = []
    n = len(scenarios)
    for k, (kappa, lam, mu) in enumerate(grid):
        chunk = results[k * n:(k + 1) * n]
        rows.append({
            "kappa": kappa, "lam": lam, "mu": mu,
            "mean_signal": float(np.mean([m.mean_signal for m in chunk])),
            "mean_saturation": float(np.mean([m.mean_saturation for m in chunk])),
            "rsu_count": float(np.mean([m.rsu_count for m in chunk])),
        })
    return rows


# -- broadcast assistance ------------------------------------------------------------

def accident_message(scenario: Scenario, seed: int, created: float = 0.0) -> BroadcastMessage:
    """An accident at a random point on the road network."""
    rng = np.random.default_rng(seed + 1000)
    x1, y1, x2, y2 = scenario.roads[rng.integers(len(scenario.roads))]
    f = rng.random()
    return BroadcastMessage(GeoCoord(float(x1 + f * (x2 - x1)), float(y1 + f * (y2 - y1))), created)


def _broadcast_one(args) -> dict:
    density, seed, area_km2, duration, rsu_ratio = args
    sc = synthesize(density, area_km2, duration, rsu_ratio, seed)
    msg = accident_message(sc, seed)
    out = {"density": density, "seed": seed}
    for label, rsus in (("rsu", sc.parked_vehicles), ("control", [])):
        s = run_broadcast(sc, rsus, msg)
        out[label] = {
            "times": s.times,
            "counts": s.counts,
            "population": s.population,
            "t90": s.time_to_fraction(0.9),
            "t100": s.time_to_fraction(1.0),
        }
    return out


def _censored_mean(values: list[float | None], cap: float) -> float:
    # runs that never reach the target count as the full duration
    return float(np.mean([cap if v is None else v for v in values]))


def broadcast_study(
    densities: Sequence[float] = (20, 40, 80),
    seeds: Iterable[int] = range(50),
    area_km2: float = 1.0,
    duration: float = 2000.0,
    rsu_ratio: float = 0.1,
    workers: int = 1,
) -> dict:
    """Reachability with every parked car acting as an RSU versus the same traffic without them."""
    seeds = list(seeds)
    jobs = [(d, s, area_km2, duration, rsu_ratio) for d in densities for s in seeds]
    runs = parallel_map(_broadcast_one, jobs, workers)
    summary = {}
    for d in densities:
        rows = [r for r in runs if r["density"] == d]
        entry = {}
        for label in ("rsu", "control"):
            entry[label] = {
                "mean_t90": _censored_mean([r[label]["t90"] for r in rows], duration),
                "mean_t100": _censored_mean([r[label]["t100"] for r in rows], duration),
                "never_full": sum(r[label]["t100"] is None for r in rows),
            }
        c, r = entry["control"]["mean_t100"], entry["rsu"]["mean_t100"]
        entry["improvement_t100"] = 1.0 - r / c if c > 0 else 0.0
        c90, r90 = entry["control"]["mean_t90"], entry["rsu"]["mean_t90"]
        entry["improvement_t90"] = 1.0 - r90 / c90 if c90 > 0 else 0.0
        summary[str(int(d)) if float(d).is_integer() else str(d)] = entry
    return {
        "densities": list(densities),
        "seeds": seeds,
        "area_km2": area_km2,
        "duration": duration,
        "rsu_ratio": rsu_ratio,
        "summary": summary,
        "runs": runs,
    }


def reachability_rows(study: dict) -> list[dict]:
    """Flatten a broadcast study into (density, arm, seed, t, count) rows."""
    rows = []
    for r in study["runs"]:
        for arm in ("rsu", "control"):
            for t, c in zip(r[arm]["times"], r[arm]["counts"]):
                rows.append({"density": r["density"], "arm": arm, "seed": r["seed"], "t": t, "count": c})
    return rows


# -- map-build speed -----------------------------------------------------------------

def _mapbuild_one(args) -> dict:
    density, seed, area_km2, duration, parked = args
    # listening never ends, so every parked car keeps learning for the whole run
    cfg = ScenarioConfig(listen_duration=duration + 1.0, rng_seed=seed)
    sc = synthesize(density, area_km2, duration, parked=parked, seed=seed, config=cfg)
    t80 = run(sc).time_to_complete(COMPLETE_FRACTION)
    return {"density": density, "seed": seed, "t80": t80}


def map_build_study(
    densities: Sequence[float] = (20, 40, 80),
    seeds: Iterable[int] = range(5),
    area_km2: float = 1.0,
    duration: float = 1500.0,
    parked: int = 10,
    workers: int = 1,
) -> dict:
    """Seconds until parked cars' maps are 80% complete, per traffic density."""
    seeds = list(seeds)
    jobs = [(d, s, area_km2, duration, parked) for d in densities for s in seeds]
    runs = parallel_map(_mapbuild_one, jobs, workers)
    summary = {}
    for d in densities:
        vals = [v for r in runs if r["density"] == d for v in r["t80"].values()]
        summary[str(d)] = {
            "cars": len(vals),
            "mean_t80": _censored_mean(vals, duration),
            "median_t80": float(np.median([duration if v is None else v for v in vals])) if vals else 0.0,
            "never": sum(v is None for v in vals),
        }
    return {"densities": list(densities), "seeds": seeds, "summary": summary, "runs": runs}
