"""Self-organising RSU decision: local maps, score metrics, decision score and the parked-car state machine.

A newly parked car overlays its own coverage map on two maps of the
neighbourhood built from the active RSUs it can hear: the best signal per
cell (``lmc``) and the number of RSUs serving each cell (``lms``).  Each
cell it covers is new coverage, improved coverage, or redundant, and the
weighted sum ``kappa*d_new + lam*d_boost - mu*d_sat`` decides whether it
becomes an RSU.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .grid import CellIndex, CoverageMap, GridMismatchError


class Mode(str, Enum):
    MOVING = "moving"
    LISTENING = "listening"
    ACTIVE = "active_rsu"
    SLEEPING = "sleeping"
    CANDIDATE = "election_candidate"


PARKED_MODES = frozenset({Mode.LISTENING, Mode.ACTIVE, Mode.SLEEPING, Mode.CANDIDATE})


@dataclass(frozen=True)
class LocalMaps:
    lmc: np.ndarray  # best level per cell
    lms: np.ndarray  # number of neighbours covering the cell
    origin: CellIndex  # global index of element (0, 0)
    cell_size: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.lmc.shape

    def lookup(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(lmc, lms) at global cells ``(n, 2)``; zero outside the extent."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        r = cells[:, 0] - self.origin.i
        c = cells[:, 1] - self.origin.j
        ok = (r >= 0) & (r < self.lmc.shape[0]) & (c >= 0) & (c < self.lmc.shape[1])
        lmc = np.zeros(len(cells), dtype=np.int64)
        lms = np.zeros(len(cells), dtype=np.int64)
        lmc[ok] = self.lmc[r[ok], c[ok]]
        lms[ok] = self.lms[r[ok], c[ok]]
        return lmc, lms


class ScoreMetrics(NamedTuple):
    d_new: int
    d_boost: int
    d_sat: int


class CellBreakdown(NamedTuple):
    """How many of the deciding car's covered cells are new, improved, or redundant."""

    new: int
    improved: int
    redundant: int


@dataclass(frozen=True)
class DecisionWeights:
    kappa: float = 1.0
    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if min(self.kappa, self.lam, self.mu) < 0:
            raise ValueError("decision weights must be non-negative")
        if self.kappa == self.lam == self.mu == 0:
            raise ValueError("decision weights cannot all be zero")


def _check_grid(maps: Sequence[CoverageMap]) -> float | None:
    sizes = {m.cell_size for m in maps}
    if len(sizes) > 1:
        raise GridMismatchError(f"coverage maps use different cell sizes: {sorted(sizes)}")
    return sizes.pop() if sizes else None


def build_local_maps(neighbors: Sequence[CoverageMap]) -> LocalMaps:
    neighbors = list(neighbors)
    cell_size = _check_grid(neighbors)
    if not neighbors:
        empty = np.zeros((0, 0), dtype=np.int64)
        return LocalMaps(empty, empty.copy(), CellIndex(0, 0), None)
    origins = np.array([m.origin for m in neighbors])
    ends = np.array([(m.origin.i + m.order, m.origin.j + m.order) for m in neighbors])
    i0, j0 = origins.min(axis=0)
    i1, j1 = ends.max(axis=0)
    lmc = np.zeros((i1 - i0, j1 - j0), dtype=np.int64)
    lms = np.zeros_like(lmc)
    for m in neighbors:
        r, c = m.origin.i - i0, m.origin.j - j0
        win = (slice(r, r + m.order), slice(c, c + m.order))
        np.maximum(lmc[win], m.cells, out=lmc[win])
        lms[win] += m.cells > 0
    return LocalMaps(lmc, lms, CellIndex(int(i0), int(j0)), cell_size)


def _overlay(own: CoverageMap, local: LocalMaps):
    if local.cell_size is not None and local.cell_size != own.cell_size:
        raise GridMismatchError(f"own map cell size {own.cell_size} != local maps {local.cell_size}")
    rs, cs = np.nonzero(own.cells)
    levels = own.cells[rs, cs].astype(np.int64)
    cells = np.column_stack([rs + own.origin.i, cs + own.origin.j])
    lmc, lms = local.lookup(cells)
    return levels, lmc, lms


def score_metrics(own: CoverageMap, local: LocalMaps) -> ScoreMetrics:
    levels, lmc, lms = _overlay(own, local)
    new = lmc == 0
    boost = ~new & (lmc < levels)
    return ScoreMetrics(
        int(levels[new].sum()),
        int((levels[boost] - lmc[boost]).sum()),
        int(lms.sum()),
    )


def cell_breakdown(own: CoverageMap, local: LocalMaps) -> CellBreakdown:
    levels, lmc, _ = _overlay(own, local)
    new = lmc == 0
    boost = ~new & (lmc < levels)
    return CellBreakdown(int(new.sum()), int(boost.sum()), int((~new & ~boost).sum()))


def decision_score(m: ScoreMetrics, w: DecisionWeights) -> float:
    return w.kappa * m.d_new + w.lam * m.d_boost - w.mu * m.d_sat


@dataclass
class NodeState:
    id: str
    scm: CoverageMap | None = None
    mode: Mode = Mode.MOVING
    delta_cov: int = 0
    last_decision_score: float | None = None
    last_metrics: ScoreMetrics | None = None
    delta_threshold: int = 1
    decisions: int = 0
    extra: dict = field(default_factory=dict)


def default_delta_threshold(scm: CoverageMap) -> int:
    return max(1, int(np.ceil(0.1 * scm.coverage_count())))


def decide(
    node: NodeState,
    neighbor_maps: Sequence[CoverageMap],
    w: DecisionWeights = DecisionWeights(),
    threshold: float = 0.0,
    delta_threshold: int | None = None,
) -> Mode:
    """Run one decision for ``node``; activates iff the score is strictly above ``threshold``."""
    if node.scm is None:
        raise ValueError(f"node {node.id} has no coverage map to decide on")
    metrics = score_metrics(node.scm, build_local_maps(neighbor_maps))
    score = decision_score(metrics, w)
    node.mode = Mode.ACTIVE if score > threshold else Mode.SLEEPING
    node.last_metrics = metrics
    node.last_decision_score = score
    node.delta_cov = 0
    node.delta_threshold = delta_threshold if delta_threshold is not None else default_delta_threshold(node.scm)
    node.decisions += 1
    return node.mode


def on_map_update(
    node: NodeState,
    changed_cells: int,
    neighbor_maps: Sequence[CoverageMap] | Callable[[], Sequence[CoverageMap]],
    w: DecisionWeights = DecisionWeights(),
    threshold: float = 0.0,
    delta_threshold: int | None = None,
) -> Mode | None:
    """Accumulate changed cells; re-decide once the accumulated count reaches the node's threshold.

    Returns the new mode when a re-decision ran, else ``None``.
    ``neighbor_maps`` may be a callable so the maps are only gathered when needed.
    """
    if node.mode not in PARKED_MODES:
        raise ValueError(f"node {node.id} is not parked (mode {node.mode.value})")
    if node.mode is Mode.LISTENING:
        return None  # first decision is scheduled at the end of the listening period
    node.delta_cov += int(changed_cells)
    if node.delta_cov < node.delta_threshold:
        return None
    maps = neighbor_maps() if callable(neighbor_maps) else neighbor_maps
    return decide(node, maps, w, threshold, delta_threshold)
