from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import completeness_oracle, floor_cell
from parkedrsu.broadcast import BroadcastMessage
from parkedrsu.engine import (
    EventQueue,
    EventType,
    SimulationInvariantError,
    Simulation,
    completeness,
    run,
)
from parkedrsu.grid import CoverageMap, GeoCoord
from parkedrsu.scenario import EventKind, MobilityTrace, ParkingEvent, Scenario, ScenarioConfig, synthesize
from parkedrsu.selforg import Mode
from strategies import random_map

LOS_TABLE = [(70.0, 5), (115.0, 4), (135.0, 3), (155.0, 2)]


def _circling_trace(center, radius, duration, ids=("m0",), period=90.0):
    t = np.arange(0.0, duration + 1)
    cols = [[], [], [], [], [], []]
    for k, vid in enumerate(ids):
        phase = 2 * math.pi * k / len(ids)
        ang = phase + 2 * math.pi * t / period
        cols[0].extend(t)
        cols[1].extend([vid] * len(t))
        cols[2].extend(center[0] + radius * np.cos(ang))
        cols[3].extend(center[1] + radius * np.sin(ang))
        cols[4].extend([2 * math.pi * radius / period] * len(t))
        cols[5].extend([0.0] * len(t))
    return MobilityTrace(*cols)


def _expected_map(center, trace, cfg):
    """Fold every trace sample into the window by hand: open field, so everything is LOS."""
    m = np.zeros((cfg.map_order, cfg.map_order), dtype=int)
    ai, aj = floor_cell(center[0], center[1], cfg.cell_size)
    h = cfg.map_order // 2
    for x, y in zip(trace.x, trace.y):
        d = math.hypot(x - center[0], y - center[1])
        q = next((lv for limit, lv in LOS_TABLE if d <= limit), 0)
        i, j = floor_cell(x, y, cfg.cell_size)
        r, c = i - ai + h, j - aj + h
        if q and 0 <= r < cfg.map_order and 0 <= c < cfg.map_order:
            m[r, c] = max(m[r, c], q)
    return m


def test_empty_scenario_gives_empty_artifacts():
    a = run(Scenario(duration=10.0))
    assert a.nodes == {} and a.decisions == [] and a.elections == []
    assert a.final_metrics.rsu_count == 0


@pytest.mark.parametrize("radius", [50.0, 100.0, 140.0])
def test_circling_mover_fills_the_oracle_map(radius):
    center = (500.0, 500.0)
    cfg = ScenarioConfig(listen_duration=1000.0)
    tr = _circling_trace(center, radius, 400)
    sc = Scenario(cfg, tr, (ParkingEvent(0.0, "p", EventKind.PARK, GeoCoord(*center)),),
                  bounds=(0, 0, 1000, 1000), duration=400.0)
    a = run(sc)
    car = a.nodes["p"]
    expect = _expected_map(center, tr, cfg)
    assert np.array_equal(car.state.scm.cells, expect)
    assert np.array_equal(car.oracle.cells, expect)
    assert car.completeness[-1][1] == 1.0


def test_completeness_examples():
    rng = np.random.default_rng(0)
    m = random_map(rng)
    assert completeness(m, m) == 1.0
    assert completeness(CoverageMap.empty(m.center), m) == (0.0 if m.coverage_count() else 1.0)
    assert completeness(m, CoverageMap.empty(m.center)) == 1.0


def test_completeness_matches_set_ratio_oracle():
    rng = np.random.default_rng(1)
    for _ in range(300):
        oracle = random_map(rng, density=rng.random())
        keep = rng.random(oracle.cells.shape) < rng.random()
        scm = CoverageMap(np.where(keep, oracle.cells, 0).astype(np.uint8), oracle.center)
        assert completeness(scm, oracle) == pytest.approx(completeness_oracle(scm, oracle))


def test_event_queue_orders_by_time_then_kind_then_insertion():
    q = EventQueue()
    q.push(5.0, EventType.DECISION_DUE, "d")
    q.push(5.0, EventType.PARK, "p")
    q.push(5.0, EventType.DEPART, "x")
    q.push(1.0, EventType.BROADCAST_CONTACT, "b")
    q.push(5.0, EventType.PARK, "p2")
    assert [q.pop().payload for _ in range(5)] == ["b", "x", "p", "p2", "d"]
    with pytest.raises(SimulationInvariantError):
        q.push(4.0, EventType.PARK)


def test_depart_without_park_is_an_invariant_violation():
    sc = synthesize(10, 0.25, 30, parked=1, seed=0)
    sim = Simulation(sc)
    with pytest.raises((SimulationInvariantError, KeyError)):
        sim.on_depart(1.0, "nobody")


def _handover_scenario(duration=400.0):
    center = (500.0, 500.0)
    cfg = ScenarioConfig(listen_duration=60.0, miss_threshold=3, wake_period=15.0)
    tr = _circling_trace(center, 80.0, duration, ids=("m0", "m1", "m2"))
    events = (
        ParkingEvent(0.0, "p0", EventKind.PARK, GeoCoord(500.0, 500.0)),
        ParkingEvent(2.0, "p1", EventKind.PARK, GeoCoord(505.0, 503.0)),
        ParkingEvent(150.0, "p0", EventKind.DEPART, None),
    )
    return Scenario(cfg, tr, events, bounds=(0, 0, 1000, 1000), duration=duration)


def test_departed_rsu_is_replaced_by_election():
    a = run(_handover_scenario())
    first = {d["node"]: d["outcome"] for d in a.decisions if d["trigger"] == "parked"}
    assert first == {"p0": "active_rsu", "p1": "sleeping"}
    assert len(a.elections) == 1
    e = a.elections[0]
    assert e["displaced"] == "p0" and e["winner"] == "p1"
    # departures run before wake windows at the same instant, so the misses are 150, 165, 180
    assert e["time"] == 180.0
    assert a.nodes["p1"].state.mode is Mode.ACTIVE
    assert a.active_ids() == ["p1"]
    counts = dict(a.rsu_counts)
    assert counts[150.0] == 0


def test_run_is_deterministic(tmp_path):
    sc = synthesize(60, 0.25, 300, parked=8, seed=5, park_window=60, depart_prob=0.5,
                    config=ScenarioConfig(listen_duration=90.0, rng_seed=5))
    msg = BroadcastMessage(GeoCoord(250.0, 250.0), 100.0)
    a = run(sc, msg).write(tmp_path / "a")
    b = run(sc, msg).write(tmp_path / "b")
    for f in sorted(p.name for p in a.iterdir()):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_park_depart_conservation_and_time_order():
    sc = synthesize(40, 0.25, 400, parked=10, seed=2, park_window=100, depart_prob=0.8,
                    config=ScenarioConfig(listen_duration=60.0))
    sim = Simulation(sc)
    seen = []
    original_pop = sim.queue.pop

    def spy():
        ev = original_pop()
        seen.append((ev.time, ev.kind))
        return ev

    sim.queue.pop = spy
    a = sim.run()
    times = [t for t, _ in seen]
    assert times == sorted(times)
    parks = departs = 0
    for e in sc.events:
        parks += e.kind is EventKind.PARK
        departs += e.kind is EventKind.DEPART
        assert parks >= departs
    assert a.invariant_checks > 0


def test_beacon_loss_only_removes_observations():
    base = synthesize(40, 0.25, 200, parked=4, seed=1, config=ScenarioConfig(listen_duration=500.0))
    lossy = base.with_config(beacon_loss=(0, 0.5, 0.5, 0.5, 0.5, 0.5))
    full = run(base)
    part = run(lossy)
    for vid in full.nodes:
        a = full.nodes[vid].state.scm.cells
        b = part.nodes[vid].state.scm.cells
        assert ((b == 0) | (b == a)).all() or (b <= a).all()
