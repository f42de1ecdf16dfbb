"""Scenario description: protocol constants, mobility trace, parking events, obstructions.

On disk a scenario is a YAML document that points at its data files
(paths relative to the YAML file)::

    duration: 1200          # seconds simulated
    bounds: [0, 0, 1000, 1000]
    config: {cell_size: 30, map_order: 11, kappa: 1, ...}
    trace: trace.csv        # time,id,x,y,speed,bearing
    events: events.csv      # time,id,kind,x,y   (kind = park | depart)
    obstructions: obstructions.json
    roads: roads.json       # optional, [[x1, y1, x2, y2], ...]

:func:`synthesize` builds the same structure from a Manhattan street grid
with city-block buildings and constant-speed random trips.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import yaml

from .grid import COORD_RESOLUTION, GeoCoord
from .propagation import ObstructionSet, QualityTable

TRACE_HEADER = ["time", "id", "x", "y", "speed", "bearing"]
EVENT_HEADER = ["time", "id", "kind", "x", "y"]
SANITY_EPS = 1e-6

PRESETS = {
    "set1": {"kappa": 1.0, "lam": 1.0, "mu": 0.1},
    "set2": {"kappa": 1.0, "lam": 8.0, "mu": 1.0},
}


class ScenarioError(ValueError):
    """A scenario file or parameter set failed validation."""


@dataclass(frozen=True)
class ScenarioConfig:
    cell_size: float = 30.0
    map_order: int = 11
    beacon_rate: float = 1.0
    kappa: float = 1.0
    lam: float = 1.0
    mu: float = 1.0
    delta_cov_threshold: int | None = None  # None: 10% of covered cells at the last decision
    listen_duration: float = 600.0
    wake_period: float = 15.0
    cch_interval: float = 0.050
    backoff_slots: int = 40
    d_score_max: float | None = None  # None: calibrate from the first decisions of the run
    miss_threshold: int = 3
    activation_threshold: float = 0.0
    beacon_loss: tuple[float, ...] | None = None  # drop probability per quality level 0..5
    los_thresholds: tuple[float, ...] = (70.0, 115.0, 135.0, 155.0)
    nlos_thresholds: tuple[float, ...] = (58.0, 65.0, 105.0, 130.0)
    rng_seed: int = 0

    def __post_init__(self):
        positive = ("cell_size", "beacon_rate", "listen_duration", "wake_period", "cch_interval")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ScenarioError(f"config.{name} must be a positive number, got {v!r}")
        for name in ("kappa", "lam", "mu"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v >= 0):
                raise ScenarioError(f"config.{name} must be non-negative, got {v!r}")
        if self.kappa == self.lam == self.mu == 0:
            raise ScenarioError("config: kappa, lam and mu cannot all be zero")
        if not isinstance(self.map_order, int) or self.map_order < 1 or self.map_order % 2 == 0:
            raise ScenarioError(f"config.map_order must be a positive odd integer, got {self.map_order!r}")
        if not isinstance(self.backoff_slots, int) or self.backoff_slots < 1:
            raise ScenarioError(f"config.backoff_slots must be an integer >= 1, got {self.backoff_slots!r}")
        if not isinstance(self.miss_threshold, int) or self.miss_threshold < 1:
            raise ScenarioError(f"config.miss_threshold must be an integer >= 1, got {self.miss_threshold!r}")
        if self.delta_cov_threshold is not None and (
            not isinstance(self.delta_cov_threshold, int) or self.delta_cov_threshold < 1
        ):
            raise ScenarioError(f"config.delta_cov_threshold must be a positive integer, got {self.delta_cov_threshold!r}")
        if self.d_score_max is not None and not self.d_score_max > 0:
            raise ScenarioError(f"config.d_score_max must be positive, got {self.d_score_max!r}")
        if self.cch_interval > self.wake_period:
            raise ScenarioError("config.cch_interval cannot exceed config.wake_period")
        if self.beacon_loss is not None:
            loss = tuple(float(p) for p in self.beacon_loss)
            if len(loss) != 6 or any(not 0 <= p <= 1 for p in loss):
                raise ScenarioError("config.beacon_loss needs 6 probabilities in [0, 1]")
            object.__setattr__(self, "beacon_loss", loss)
        try:
            object.__setattr__(self, "los_thresholds", tuple(float(v) for v in self.los_thresholds))
            object.__setattr__(self, "nlos_thresholds", tuple(float(v) for v in self.nlos_thresholds))
            self.quality_table()
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"config thresholds: {exc}") from None

    def quality_table(self) -> QualityTable:
        return QualityTable(self.los_thresholds, self.nlos_thresholds)

    @classmethod
    def from_dict(cls, d: dict[str, Any] | None) -> "ScenarioConfig":
        d = dict(d or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ScenarioError(f"config: unknown field(s) {', '.join(unknown)}")
        for name in ("beacon_loss", "los_thresholds", "nlos_thresholds"):
            if isinstance(d.get(name), list):
                d[name] = tuple(d[name])
        for name in ("map_order", "backoff_slots", "miss_threshold", "rng_seed"):
            if isinstance(d.get(name), float) and d[name].is_integer():
                d[name] = int(d[name])
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def with_preset(self, name: str) -> "ScenarioConfig":
        try:
            return dataclasses.replace(self, **PRESETS[name])
        except KeyError:
            raise ScenarioError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


class EventKind(str, Enum):
    PARK = "park"
    DEPART = "depart"


@dataclass(frozen=True, order=True)
class ParkingEvent:
    time: float
    vehicle: str
    kind: EventKind
    position: GeoCoord | None = None


class MobilityTrace:
    """Time-ordered vehicle samples, resampled on demand onto a regular tick grid."""

    def __init__(self, time, vehicle, x, y, speed, bearing):
        self.time = np.asarray(time, dtype=float)
        self.vehicle = np.asarray(vehicle, dtype=object)
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.speed = np.asarray(speed, dtype=float)
        self.bearing = np.asarray(bearing, dtype=float)
        n = len(self.time)
        if not all(len(a) == n for a in (self.vehicle, self.x, self.y, self.speed, self.bearing)):
            raise ScenarioError("trace columns have different lengths")
        order = np.lexsort((self.vehicle.astype(str), self.time)) if n else np.zeros(0, dtype=int)
        for name in ("time", "vehicle", "x", "y", "speed", "bearing"):
            setattr(self, name, getattr(self, name)[order])
        self._by_vehicle: dict[str, np.ndarray] = {}
        for k, vid in enumerate(self.vehicle):
            self._by_vehicle.setdefault(vid, []).append(k)
        self._by_vehicle = {v: np.asarray(ix) for v, ix in self._by_vehicle.items()}

    def __len__(self):
        return len(self.time)

    @classmethod
    def empty(cls) -> "MobilityTrace":
        return cls([], [], [], [], [], [])

    @property
    def vehicles(self) -> list[str]:
        return sorted(self._by_vehicle)

    def samples(self, vehicle: str) -> np.ndarray:
        """``(k, 3)`` array of (time, x, y) for one vehicle."""
        ix = self._by_vehicle[vehicle]
        return np.column_stack([self.time[ix], self.x[ix], self.y[ix]])

    def validate(self, bounds: tuple[float, float, float, float] | None = None):
        for arr, name in ((self.time, "time"), (self.x, "x"), (self.y, "y"), (self.speed, "speed"), (self.bearing, "bearing")):
            bad = np.nonzero(~np.isfinite(arr))[0]
            if len(bad):
                raise ScenarioError(f"trace record {int(bad[0])}: non-finite {name}")
        if (self.speed < 0).any():
            k = int(np.nonzero(self.speed < 0)[0][0])
            raise ScenarioError(f"trace record {k} (vehicle {self.vehicle[k]}): negative speed")
        for vid, ix in self._by_vehicle.items():
            t = self.time[ix]
            if len(t) > 1 and (np.diff(t) <= 0).any():
                k = int(np.nonzero(np.diff(t) <= 0)[0][0])
                raise ScenarioError(f"trace vehicle {vid}: timestamps not strictly increasing at t={t[k + 1]}")
        if bounds is not None:
            x0, y0, x1, y1 = bounds
            out = (self.x < x0) | (self.x > x1) | (self.y < y0) | (self.y > y1)
            if out.any():
                k = int(np.nonzero(out)[0][0])
                raise ScenarioError(f"trace record {k} (vehicle {self.vehicle[k]}): position outside bounds")

    def max_sanity_violation(self) -> float:
        """Largest ratio displacement / (speed * dt) over consecutive samples (<= 1 + eps when sane)."""
        worst = 0.0
        for ix in self._by_vehicle.values():
            if len(ix) < 2:
                continue
            dt = np.diff(self.time[ix])
            disp = np.hypot(np.diff(self.x[ix]), np.diff(self.y[ix]))
            v = np.maximum(self.speed[ix][:-1], self.speed[ix][1:])
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(disp > 0, disp / (v * dt), 0.0)
            worst = max(worst, float(np.max(ratio)))
        return worst

    def resample(self, ticks: np.ndarray) -> tuple[list[str], np.ndarray]:
        """Positions at ``ticks`` as a ``(len(ticks), n_vehicles, 2)`` array; NaN where absent.

        Between two samples the position is linearly interpolated; outside
        a vehicle's first/last sample it is absent.
        """
        ticks = np.asarray(ticks, dtype=float)
        ids = self.vehicles
        pos = np.full((len(ticks), len(ids), 2), np.nan)
        for k, vid in enumerate(ids):
            s = self.samples(vid)
            live = (ticks >= s[0, 0]) & (ticks <= s[-1, 0])
            if live.any():
                pos[live, k, 0] = np.interp(ticks[live], s[:, 0], s[:, 1])
                pos[live, k, 1] = np.interp(ticks[live], s[:, 0], s[:, 2])
        return ids, pos

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in zip(self.time, self.vehicle, self.x, self.y, self.speed, self.bearing):
            w.writerow([_fmt(row[0]), row[1], _fmt(row[2]), _fmt(row[3]), _fmt(row[4]), _fmt(row[5])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MobilityTrace":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRACE_HEADER:
            raise ScenarioError(f"trace header must be {','.join(TRACE_HEADER)}, got {header!r}")
        cols: list[list] = [[] for _ in TRACE_HEADER]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACE_HEADER):
                raise ScenarioError(f"trace line {lineno}: expected {len(TRACE_HEADER)} fields, got {len(row)}")
            try:
                cols[0].append(float(row[0]))
                cols[1].append(row[1].strip())
                for k in range(2, 6):
                    cols[k].append(float(row[k]))
            except ValueError as exc:
                raise ScenarioError(f"trace line {lineno}: {exc}") from None
        # check raw ordering before the constructor sorts it
        last: dict[str, float] = {}
        for lineno, (t, vid) in enumerate(zip(cols[0], cols[1]), start=2):
            if vid in last and t <= last[vid]:
                raise ScenarioError(f"trace line {lineno} (vehicle {vid}): timestamp {t} not after {last[vid]}")
            last[vid] = t
        return cls(*cols)


def _fmt(v: float) -> str:
    return repr(round(float(v), 6))


def events_to_csv(events: Iterable[ParkingEvent]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_HEADER)
    for e in events:
        x, y = ("", "") if e.position is None else (_fmt(e.position.x), _fmt(e.position.y))
        w.writerow([_fmt(e.time), e.vehicle, e.kind.value, x, y])
    return buf.getvalue()


def events_from_csv(text: str) -> list[ParkingEvent]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != EVENT_HEADER:
        raise ScenarioError(f"events header must be {','.join(EVENT_HEADER)}, got {header!r}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(EVENT_HEADER):
            raise ScenarioError(f"events line {lineno}: expected {len(EVENT_HEADER)} fields, got {len(row)}")
        try:
            kind = EventKind(row[2].strip().lower())
            pos = None
            if row[3].strip() or row[4].strip():
                pos = GeoCoord(float(row[3]), float(row[4]))
            out.append(ParkingEvent(float(row[0]), row[1].strip(), kind, pos))
        except ValueError as exc:
            raise ScenarioError(f"events line {lineno}: {exc}") from None
    return out


def validate_events(events: list[ParkingEvent], bounds=None):
    parked: dict[str, bool] = {}
    for k, e in enumerate(events):
        if not math.isfinite(e.time) or e.time < 0:
            raise ScenarioError(f"event {k} (vehicle {e.vehicle}): bad time {e.time}")
        if k and e.time < events[k - 1].time:
            raise ScenarioError(f"event {k} (vehicle {e.vehicle}): events not time-ordered")
        if e.kind is EventKind.PARK:
            if parked.get(e.vehicle):
                raise ScenarioError(f"event {k}: vehicle {e.vehicle} parks twice without departing")
            if e.position is None:
                raise ScenarioError(f"event {k}: park event for {e.vehicle} has no position")
            if bounds is not None:
                x0, y0, x1, y1 = bounds
                if not (x0 <= e.position.x <= x1 and y0 <= e.position.y <= y1):
                    raise ScenarioError(f"event {k}: park position of {e.vehicle} outside bounds")
            parked[e.vehicle] = True
        else:
            if not parked.get(e.vehicle):
                raise ScenarioError(f"event {k}: vehicle {e.vehicle} departs without having parked")
            parked[e.vehicle] = False


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig = field(default_factory=ScenarioConfig)
    trace: MobilityTrace = field(default_factory=MobilityTrace.empty)
    events: tuple[ParkingEvent, ...] = ()
    obstructions: ObstructionSet = field(default_factory=ObstructionSet)
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 1000.0, 1000.0)
    duration: float = 600.0
    roads: tuple[tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: (e.time, e.kind != EventKind.DEPART, e.vehicle))))
        object.__setattr__(self, "bounds", tuple(float(v) for v in self.bounds))
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ScenarioError(f"bounds must have positive area, got {self.bounds}")
        if x0 < 0 or y0 < 0 or max(x1, y1) > 0xFFFF * COORD_RESOLUTION:
            raise ScenarioError("bounds must lie inside the encodable coordinate range")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ScenarioError(f"duration must be positive, got {self.duration}")
        self.trace.validate(self.bounds)
        validate_events(list(self.events), self.bounds)

    @property
    def parked_vehicles(self) -> list[str]:
        return sorted({e.vehicle for e in self.events if e.kind is EventKind.PARK})

    def with_config(self, **changes) -> "Scenario":
        return dataclasses.replace(self, config=dataclasses.replace(self.config, **changes))

    def road_points(self, spacing: float = 5.0) -> np.ndarray:
        """Points every ``spacing`` meters along the road segments (deduplicated)."""
        pts = []
        for x1, y1, x2, y2 in self.roads:
            n = max(1, int(math.ceil(math.hypot(x2 - x1, y2 - y1) / spacing)))
            s = np.linspace(0.0, 1.0, n + 1)
            pts.append(np.column_stack([x1 + s * (x2 - x1), y1 + s * (y2 - y1)]))
        if not pts:
            return np.zeros((0, 2))
        return np.unique(np.round(np.concatenate(pts), 6), axis=0)

    def manifest(self) -> dict[str, Any]:
        return {
            "duration": self.duration,
            "bounds": list(self.bounds),
            "config": self.config.to_dict(),
        }

    def digest(self) -> str:
        """Stable SHA-256 over the full scenario content."""
        h = hashlib.sha256()
        h.update(json.dumps(self.manifest(), sort_keys=True).encode())
        h.update(self.trace.to_csv().encode())
        h.update(events_to_csv(self.events).encode())
        h.update(self.obstructions.to_json().encode())
        h.update(json.dumps([list(r) for r in self.roads]).encode())
        return h.hexdigest()


def save_scenario(scenario: Scenario, directory, name: str = "scenario.yaml") -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "trace.csv").write_text(scenario.trace.to_csv())
    (d / "events.csv").write_text(events_to_csv(scenario.events))
    (d / "obstructions.json").write_text(scenario.obstructions.to_json())
    (d / "roads.json").write_text(json.dumps([list(r) for r in scenario.roads]))
    doc = scenario.manifest()
    doc.update(trace="trace.csv", events="events.csv", obstructions="obstructions.json", roads="roads.json")
    path = d / name
    path.write_text(yaml.safe_dump(doc, sort_keys=True))
    return path


def apply_overrides(doc: dict, overrides: Iterable[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as YAML scalars."""
    doc = json.loads(json.dumps(doc))  # deep copy of plain data
    for item in overrides:
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ScenarioError(f"override {item!r}: {p} is not a mapping")
        node[parts[-1]] = yaml.safe_load(raw)
    return doc


def read_scenario_doc(path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file {path} not found")
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return doc, path.parent


def scenario_from_doc(doc: dict, base: Path = Path(".")) -> Scenario:
    allowed = {"duration", "bounds", "config", "trace", "events", "obstructions", "roads"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ScenarioError(f"unknown top-level field(s) {', '.join(unknown)}")

    def _read(key):
        rel = doc.get(key)
        if rel is None:
            return None
        p = base / rel
        if not p.is_file():
            raise ScenarioError(f"{key}: file {p} not found")
        return p.read_text()

    config = ScenarioConfig.from_dict(doc.get("config"))
    trace_text = _read("trace")
    trace = MobilityTrace.from_csv(trace_text) if trace_text is not None else MobilityTrace.empty()
    ev_text = _read("events")
    events = events_from_csv(ev_text) if ev_text is not None else []
    validate_events(events)
    ob_text = _read("obstructions")
    try:
        obstructions = ObstructionSet.from_json(ob_text) if ob_text is not None else ObstructionSet()
    except ValueError as exc:
        raise ScenarioError(f"obstructions: {exc}") from None
    rd_text = _read("roads")
    roads = tuple(tuple(float(v) for v in r) for r in json.loads(rd_text)) if rd_text is not None else ()
    if any(len(r) != 4 for r in roads):
        raise ScenarioError("roads: each segment needs [x1, y1, x2, y2]")
    bounds = doc.get("bounds", [0, 0, 1000, 1000])
    if not (isinstance(bounds, list) and len(bounds) == 4):
        raise ScenarioError("bounds: expected [xmin, ymin, xmax, ymax]")
    duration = doc.get("duration", 600.0)
    if not isinstance(duration, (int, float)):
        raise ScenarioError(f"duration: expected a number, got {duration!r}")
    return Scenario(config, trace, tuple(events), obstructions, tuple(bounds), float(duration), roads)


def load_scenario(path, overrides: Iterable[str] = ()) -> Scenario:
    doc, base = read_scenario_doc(path)
    return scenario_from_doc(apply_overrides(doc, overrides), base)


# --- synthetic Manhattan scenarios -------------------------------------------------------

def manhattan_roads(side: float, block: float) -> tuple[np.ndarray, list[tuple[float, float, float, float]]]:
    """Intersections and unit road segments of a square street grid."""
    n = max(1, int(round(side / block)))
    coords = np.linspace(0.0, side, n + 1)
    nodes = np.array([(x, y) for y in coords for x in coords])
    segs = []
    for a in range(n + 1):
        for b in range(n):
            segs.append((coords[b], coords[a], coords[b + 1], coords[a]))  # horizontal
            segs.append((coords[a], coords[b], coords[a], coords[b + 1]))  # vertical
    return nodes, segs


def city_blocks(side: float, block: float, setback: float) -> list[np.ndarray]:
    n = max(1, int(round(side / block)))
    coords = np.linspace(0.0, side, n + 1)
    polys = []
    for r in range(n):
        for c in range(n):
            x0, x1 = coords[c] + setback, coords[c + 1] - setback
            y0, y1 = coords[r] + setback, coords[r + 1] - setback
            if x1 > x0 and y1 > y0:
                polys.append(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))
    return polys


def _random_trip_route(rng: np.random.Generator, coords: np.ndarray, length_needed: float) -> np.ndarray:
    """Waypoints of consecutive Manhattan trips between random intersections."""
    n = len(coords)
    # start somewhere along a random road segment
    horizontal = rng.random() < 0.5
    a, b = rng.integers(0, n), rng.integers(0, n - 1)
    frac = rng.random()
    if horizontal:
        start = (coords[b] + frac * (coords[b + 1] - coords[b]), coords[a])
        first = (coords[b + int(rng.random() < 0.5)], coords[a])
    else:
        start = (coords[a], coords[b] + frac * (coords[b + 1] - coords[b]))
        first = (coords[a], coords[b + int(rng.random() < 0.5)])
    pts = [start, first]
    total = math.hypot(first[0] - start[0], first[1] - start[1])
    cur = first
    while total < length_needed:
        dest = (coords[rng.integers(0, n)], coords[rng.integers(0, n)])
        if dest == cur:
            continue
        corner = (dest[0], cur[1]) if rng.random() < 0.5 else (cur[0], dest[1])
        for p in (corner, dest):
            if p != pts[-1]:
                total += math.hypot(p[0] - pts[-1][0], p[1] - pts[-1][1])
                pts.append(p)
        cur = dest
    return np.array(pts, dtype=float)


def _sample_route(route: np.ndarray, speed: float, times: np.ndarray):
    seg = np.diff(route, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = speed * (times - times[0])
    x = np.interp(s, cum, route[:, 0])
    y = np.interp(s, cum, route[:, 1])
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    bearing = np.degrees(np.arctan2(seg[k, 0], seg[k, 1])) % 360.0
    return x, y, bearing


def synthesize(
    density: float,
    area_km2: float,
    duration: float,
    parked_ratio: float = 0.1,
    seed: int = 0,
    *,
    parked: int | None = None,
    block: float = 100.0,
    setback: float = 12.0,
    speed_range: tuple[float, float] = (8.0, 14.0),
    park_window: float = 0.0,
    depart_prob: float = 0.0,
    config: ScenarioConfig | None = None,
) -> Scenario:
    """Random Manhattan-grid scenario.

    ``round(density * area_km2)`` vehicles drive constant-speed trips for
    the whole run; ``round(movers * parked_ratio)`` cars (or ``parked``)
    park uniformly at random on the road segments, at times drawn
    uniformly from ``[0, park_window]``.  With ``depart_prob`` each parked
    car leaves again at a uniform time after it parked.
    """
    if not (density > 0 and math.isfinite(density)):
        raise ScenarioError(f"density must be positive, got {density}")
    if not area_km2 > 0:
        raise ScenarioError(f"area must be positive, got {area_km2}")
    if not duration > 0:
        raise ScenarioError(f"duration must be positive, got {duration}")
    if parked_ratio < 0:
        raise ScenarioError(f"parked_ratio must be non-negative, got {parked_ratio}")
    rng = np.random.default_rng(seed)
    side = math.sqrt(area_km2) * 1000.0
    n_blocks = max(1, int(round(side / block)))
    block = side / n_blocks
    coords = np.linspace(0.0, side, n_blocks + 1)
    _, segs = manhattan_roads(side, block)
    n_movers = int(round(density * area_km2))
    n_parked = int(round(n_movers * parked_ratio)) if parked is None else int(parked)

    times = np.arange(0.0, math.floor(duration) + 1.0)
    cols: list[list] = [[] for _ in TRACE_HEADER]
    for m in range(n_movers):
        speed = float(rng.uniform(*speed_range))
        route = _random_trip_route(rng, coords, speed * duration + block)
        x, y, bearing = _sample_route(route, speed, times)
        vid = f"m{m:03d}"
        cols[0].extend(times)
        cols[1].extend([vid] * len(times))
        cols[2].extend(np.clip(np.round(x, 6), 0.0, side))
        cols[3].extend(np.clip(np.round(y, 6), 0.0, side))
        cols[4].extend([round(speed, 6)] * len(times))
        cols[5].extend(np.round(bearing, 6))
    trace = MobilityTrace(*cols)

    events = []
    for p in range(n_parked):
        x1, y1, x2, y2 = segs[rng.integers(0, len(segs))]
        f = rng.random()
        # rounding may step past the far edge of the area by a micrometer
        px = min(side, float(round(x1 + f * (x2 - x1), 6)))
        py = min(side, float(round(y1 + f * (y2 - y1), 6)))
        pos = GeoCoord(px, py)
        t_park = float(round(rng.uniform(0.0, park_window), 3)) if park_window > 0 else 0.0
        vid = f"p{p:03d}"
        events.append(ParkingEvent(t_park, vid, EventKind.PARK, pos))
        if depart_prob > 0 and rng.random() < depart_prob:
            t_dep = float(round(rng.uniform(t_park, duration), 3))
            events.append(ParkingEvent(t_dep, vid, EventKind.DEPART, None))
    events.sort(key=lambda e: (e.time, e.kind != EventKind.DEPART, e.vehicle))

    obstructions = ObstructionSet(tuple(city_blocks(side, block, setback)))
    return Scenario(
        config=config or ScenarioConfig(rng_seed=seed),
        trace=trace,
        events=tuple(events),
        obstructions=obstructions,
        bounds=(0.0, 0.0, side, side),
        duration=float(duration),
        roads=tuple(tuple(float(v) for v in s) for s in segs),
    )
