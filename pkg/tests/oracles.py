"""Independent reference implementations used only by the tests.

Each one recomputes a result the slow, obvious way (plain dicts, loops,
shapely) so that it shares no code path with the package.
"""
from __future__ import annotations

import math
from collections import defaultdict
from fractions import Fraction

import numpy as np
from shapely.geometry import LineString, Point, Polygon


def floor_cell(x: float, y: float, cell: float) -> tuple[int, int]:
    return int(math.floor(y / cell)), int(math.floor(x / cell))


def cell_dict(m) -> dict[tuple[int, int], int]:
    """Global cell -> level for every nonzero cell of a map, derived from its center."""
    ai, aj = floor_cell(m.center.x, m.center.y, m.cell_size)
    h = m.cells.shape[0] // 2
    out = {}
    for r in range(m.cells.shape[0]):
        for c in range(m.cells.shape[1]):
            v = int(m.cells[r, c])
            if v:
                out[(ai - h + r, aj - h + c)] = v
    return out


def local_maps_oracle(neighbors) -> tuple[dict, dict]:
    lmc: dict[tuple[int, int], int] = defaultdict(int)
    lms: dict[tuple[int, int], int] = defaultdict(int)
    for m in neighbors:
        for cell, v in cell_dict(m).items():
            lmc[cell] = max(lmc[cell], v)
            lms[cell] += 1
    return dict(lmc), dict(lms)


def score_oracle(own, neighbors) -> tuple[int, int, int]:
    lmc, lms = local_maps_oracle(neighbors)
    d_new = d_boost = d_sat = 0
    for cell, v in cell_dict(own).items():
        best = lmc.get(cell, 0)
        if best == 0:
            d_new += v
        elif best < v:
            d_boost += v - best
        d_sat += lms.get(cell, 0)
    return d_new, d_boost, d_sat


def blocked_shapely(a, b, polygons) -> bool:
    """Closed segment a-b touches any closed polygon (edge, vertex or interior)."""
    if a[0] == b[0] and a[1] == b[1]:
        geom = Point(a)
    else:
        geom = LineString([a, b])
    return any(geom.intersects(Polygon(p)) for p in polygons)


def _exact_cross(o, a, b) -> Fraction:
    o, a, b = ([Fraction(v) for v in p] for p in (o, a, b))
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def hull_vertices_cubic(points) -> set[int]:
    """O(n^3) hull: (i, j) is a hull edge when no point lies strictly right of i->j
    and collinear points lie on the closed segment.  Vertices are the edge endpoints."""
    pts = [tuple(map(float, p)) for p in points]
    first = {}
    for k, p in enumerate(pts):
        first.setdefault(p, k)
    uniq = list(first)
    if len(uniq) <= 2:
        return {first[p] for p in uniq}
    P = np.array(uniq)
    out = set()
    for i in range(len(P)):
        for j in range(len(P)):
            if i == j:
                continue
            d = P[j] - P[i]
            rel = P - P[i]
            cross = d[0] * rel[:, 1] - d[1] * rel[:, 0]
            # settle the signs float rounding cannot decide with exact rationals
            for k in np.nonzero(np.abs(cross) < 1e-6)[0]:
                cross[k] = float(_exact_cross(uniq[i], uniq[j], uniq[k]))
            if (cross < 0).any():
                continue
            col = cross == 0
            col[[i, j]] = False  # the endpoints themselves sit at t = 0 and t = 1
            t = rel[col] @ d / (d @ d)
            if ((t < 0) | (t > 1)).any():
                continue
            out.add(first[uniq[i]])
            out.add(first[uniq[j]])
    if not out:
        return out
    # all collinear: every consecutive pair passed, keep the two extremes only
    if all(
        (P[k] - P[0])[0] * (P[1] - P[0])[1] - (P[k] - P[0])[1] * (P[1] - P[0])[0] == 0 for k in range(len(P))
    ):
        return {first[min(uniq)], first[max(uniq)]}
    return out


def metrics_oracle(candidates, active) -> tuple[float, float, int]:
    coverable = set()
    for m in candidates:
        coverable |= set(cell_dict(m))
    if not coverable or not any(active):
        return 0.0, 0.0, int(sum(bool(a) for a in active))
    sig = sat = 0
    for cell in coverable:
        levels = [cell_dict(m).get(cell, 0) for m, a in zip(candidates, active) if a]
        sig += max(levels)
        sat += sum(1 for v in levels if v > 0)
    return sig / len(coverable), sat / len(coverable), int(sum(bool(a) for a in active))


def completeness_oracle(scm, oracle_map) -> float:
    want = set(cell_dict(oracle_map))
    if not want:
        return 1.0
    return len(set(cell_dict(scm)) & want) / len(want)
