"""Line-of-sight against building footprints and distance-based link quality.

Link quality is read off a fixed distance table with separate LOS and NLOS
columns.  The default table is the empirical 802.11p urban criterion::

    quality   LOS     NLOS
       5      70 m    58 m
       4     115 m    65 m
       3     135 m   105 m
       2     155 m   130 m

Anything beyond the level-2 distance is quality 0; level 1 is never
produced.  A segment that merely grazes a polygon vertex or edge is NLOS.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class QualityTable:
    # thresholds for quality 5, 4, 3, 2
    los_thresholds: tuple[float, float, float, float] = (70.0, 115.0, 135.0, 155.0)
    nlos_thresholds: tuple[float, float, float, float] = (58.0, 65.0, 105.0, 130.0)

    def __post_init__(self):
        for name in ("los_thresholds", "nlos_thresholds"):
            col = tuple(float(v) for v in getattr(self, name))
            if len(col) != 4:
                raise ValueError(f"{name} needs 4 distances, got {len(col)}")
            if any(b <= a for a, b in zip(col, col[1:])) or col[0] <= 0:
                raise ValueError(f"{name} must be positive and strictly increasing: {col}")
            object.__setattr__(self, name, col)
        if any(n > l for n, l in zip(self.nlos_thresholds, self.los_thresholds)):
            raise ValueError("NLOS thresholds may not exceed LOS thresholds")

    @property
    def max_range(self) -> float:
        return self.los_thresholds[-1]

    def level(self, distance: float, los: bool) -> int:
        col = self.los_thresholds if los else self.nlos_thresholds
        for q, limit in zip((5, 4, 3, 2), col):
            if distance <= limit:
                return q
        return 0

    def levels(self, distance: np.ndarray, los: np.ndarray) -> np.ndarray:
        distance = np.asarray(distance, dtype=float)
        los = np.asarray(los, dtype=bool)
        out = np.zeros(distance.shape, dtype=np.uint8)
        # fill from the weakest level upwards so stronger levels overwrite
        for k, q in reversed(list(enumerate((5, 4, 3, 2)))):
            limit = np.where(los, self.los_thresholds[k], self.nlos_thresholds[k])
            out[distance <= limit] = q
        return out


@dataclass(frozen=True)
class ObstructionSet:
    polygons: tuple[np.ndarray, ...] = ()
    _edges: np.ndarray = field(init=False, repr=False, compare=False)
    _bbox: np.ndarray = field(init=False, repr=False, compare=False)
    _edge_count: np.ndarray = field(init=False, repr=False, compare=False)
    _edge_start: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        polys = []
        for k, ring in enumerate(self.polygons):
            ring = np.asarray(ring, dtype=float).reshape(-1, 2)
            if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
                ring = ring[:-1]
            if len(ring) < 3:
                raise ValueError(f"polygon {k} has fewer than 3 vertices")
            if not np.isfinite(ring).all():
                raise ValueError(f"polygon {k} has non-finite vertices")
            ring.flags.writeable = False
            polys.append(ring)
        object.__setattr__(self, "polygons", tuple(polys))
        # flat edge list (x1, y1, x2, y2, polygon id) for batched tests
        if polys:
            edges = np.concatenate(
                [np.hstack([p, np.roll(p, -1, axis=0), np.full((len(p), 1), k)]) for k, p in enumerate(polys)]
            )
            bbox = np.array([[p[:, 0].min(), p[:, 1].min(), p[:, 0].max(), p[:, 1].max()] for p in polys])
        else:
            edges = np.zeros((0, 5))
            bbox = np.zeros((0, 4))
        counts = np.array([len(p) for p in polys], dtype=np.int64)
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_bbox", bbox)
        object.__setattr__(self, "_edge_count", counts)
        object.__setattr__(self, "_edge_start", np.cumsum(counts) - counts)

    def __len__(self):
        return len(self.polygons)

    @classmethod
    def from_json(cls, source) -> "ObstructionSet":
        """Load ``[[[x, y], ...], ...]`` (or ``{"polygons": [...]}``) from a path or JSON text."""
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith(("[", "{"))):
            doc = json.loads(Path(source).read_text())
        else:
            doc = json.loads(source)
        if isinstance(doc, dict):
            doc = doc.get("polygons")
        if not isinstance(doc, list):
            raise ValueError("obstruction document must be a list of rings")
        return cls(tuple(np.asarray(r, dtype=float) for r in doc))

    def to_json(self) -> str:
        return json.dumps([p.tolist() for p in self.polygons])


def _orient(ax, ay, bx, by, cx, cy):
    return np.sign((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))


def _on_segment(ax, ay, bx, by, px, py):
    # p assumed collinear with a-b
    return (np.minimum(ax, bx) <= px) & (px <= np.maximum(ax, bx)) & (np.minimum(ay, by) <= py) & (py <= np.maximum(ay, by))


def _segments_touch(ax, ay, bx, by, cx, cy, dx, dy):
    """Closed segment intersection test, broadcasting over arrays."""
    o1 = _orient(ax, ay, bx, by, cx, cy)
    o2 = _orient(ax, ay, bx, by, dx, dy)
    o3 = _orient(cx, cy, dx, dy, ax, ay)
    o4 = _orient(cx, cy, dx, dy, bx, by)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)
    touch = (
        ((o1 == 0) & _on_segment(ax, ay, bx, by, cx, cy))
        | ((o2 == 0) & _on_segment(ax, ay, bx, by, dx, dy))
        | ((o3 == 0) & _on_segment(cx, cy, dx, dy, ax, ay))
        | ((o4 == 0) & _on_segment(cx, cy, dx, dy, bx, by))
    )
    return proper | touch


def los_mask(a: np.ndarray, b: np.ndarray, obs: ObstructionSet) -> np.ndarray:
    """Line-of-sight flags for paired endpoints ``a[k]``-``b[k]`` (both ``(n, 2)``)."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    n = len(a)
    clear = np.ones(n, dtype=bool)
    if n == 0 or len(obs) == 0:
        return clear
    # canonical endpoint order keeps the floating-point predicates symmetric in (a, b)
    swap = (a[:, 0] > b[:, 0]) | ((a[:, 0] == b[:, 0]) & (a[:, 1] > b[:, 1]))
    a, b = np.where(swap[:, None], b, a), np.where(swap[:, None], a, b)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    bbox = obs._bbox
    # candidate (segment, polygon) pairs whose bounding boxes overlap
    hit = (
        (lo[:, None, 0] <= bbox[None, :, 2])
        & (hi[:, None, 0] >= bbox[None, :, 0])
        & (lo[:, None, 1] <= bbox[None, :, 3])
        & (hi[:, None, 1] >= bbox[None, :, 1])
    )
    seg_idx, poly_idx = np.nonzero(hit)
    if len(seg_idx) == 0:
        return clear
    # expand every candidate pair into (segment, edge) rows
    counts = obs._edge_count[poly_idx]
    pair = np.repeat(np.arange(len(seg_idx)), counts)
    first = np.repeat(np.cumsum(counts) - counts, counts)
    edge = np.repeat(obs._edge_start[poly_idx], counts) + (np.arange(len(pair)) - first)
    e = obs._edges[edge]
    s = seg_idx[pair]
    ax, ay, bx, by = a[s, 0], a[s, 1], b[s, 0], b[s, 1]
    cx, cy, dx, dy = e[:, 0], e[:, 1], e[:, 2], e[:, 3]
    touched = _segments_touch(ax, ay, bx, by, cx, cy, dx, dy)
    # even-odd ray cast from endpoint a: a segment with no edge contact is blocked only when inside
    crosses = (cy > ay) != (dy > ay)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = cx + (ay - cy) * (dx - cx) / (dy - cy)
    crosses &= ax < xint
    npairs = len(seg_idx)
    any_touch = np.bincount(pair, weights=touched, minlength=npairs) > 0
    inside = np.bincount(pair, weights=crosses, minlength=npairs).astype(np.int64) % 2 == 1
    blocked = seg_idx[any_touch | inside]
    clear[blocked] = False
    return clear


def has_los(a: tuple[float, float], b: tuple[float, float], obs: ObstructionSet) -> bool:
    return bool(los_mask(np.array([a]), np.array([b]), obs)[0])


def classify(a, b, obs: ObstructionSet, qt: QualityTable = QualityTable()) -> int:
    d = math.hypot(a[0] - b[0], a[1] - b[1])
    if d > qt.max_range:
        return 0
    return qt.level(d, has_los(a, b, obs))


def classify_many(a: np.ndarray, b: np.ndarray, obs: ObstructionSet, qt: QualityTable = QualityTable()) -> np.ndarray:
    """Vectorised :func:`classify` over paired endpoint arrays."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    d = np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])
    out = np.zeros(len(d), dtype=np.uint8)
    near = np.nonzero(d <= qt.max_range)[0]
    if len(near):
        los = los_mask(a[near], b[near], obs)
        out[near] = qt.levels(d[near], los)
    return out


def link_matrix(points: np.ndarray, obs: ObstructionSet, qt: QualityTable = QualityTable()) -> np.ndarray:
    """Symmetric ``(n, n)`` matrix of pairwise link quality; the diagonal is 0."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(points)
    q = np.zeros((n, n), dtype=np.uint8)
    if n < 2:
        return q
    iu, ju = np.triu_indices(n, k=1)
    d = np.hypot(*(points[iu] - points[ju]).T)
    near = d <= qt.max_range
    iu, ju = iu[near], ju[near]
    if len(iu):
        levels = classify_many(points[iu], points[ju], obs, qt)
        q[iu, ju] = levels
        q[ju, iu] = levels
    return q
