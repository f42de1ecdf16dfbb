"""Exhaustive optimal RSU selection and network-level coverage metrics.

Metrics are averaged over the *coverable* cells: every cell that at least
one candidate (active or not) covers.  For a subset of active candidates,

* ``mean_signal``      mean over coverable cells of the best active level,
* ``mean_saturation``  mean over coverable cells of the number of active
                       candidates covering the cell,
* ``rsu_count``        number of active candidates.

The optimum is found by visiting all ``2**n`` subsets in Gray-code order,
updating per-cell level counts incrementally (one candidate flips per step).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .grid import CoverageMap
from .selforg import _check_grid

DEFAULT_CAP = 24
DEFAULT_EPS = 0.01


class NetworkMetrics(NamedTuple):
    mean_signal: float
    mean_saturation: float
    rsu_count: int


class CandidateMatrix(NamedTuple):
    levels: np.ndarray  # (n_candidates, n_cells) uint8 over the coverable cells
    cells: np.ndarray  # (n_cells, 2) global cell indices


def candidate_matrix(candidates: Sequence[CoverageMap]) -> CandidateMatrix:
    _check_grid(list(candidates))
    if not candidates:
        return CandidateMatrix(np.zeros((0, 0), dtype=np.uint8), np.zeros((0, 2), dtype=np.int64))
    cover: dict[tuple[int, int], int] = {}
    for m in candidates:
        for c in sorted(m.nonzero_cells()):
            cover.setdefault((c.i, c.j), len(cover))
    cells = sorted(cover)
    index = {c: k for k, c in enumerate(cells)}
    levels = np.zeros((len(candidates), len(cells)), dtype=np.uint8)
    for n, m in enumerate(candidates):
        o = m.origin
        rs, cs = np.nonzero(m.cells)
        for r, c in zip(rs, cs):
            levels[n, index[(o.i + int(r), o.j + int(c))]] = m.cells[r, c]
    return CandidateMatrix(levels, np.array(cells, dtype=np.int64).reshape(-1, 2))


def _as_bool_mask(active, n: int) -> np.ndarray:
    if isinstance(active, (int, np.integer)):
        if not 0 <= int(active) < (1 << n) or (n == 0 and active):
            raise ValueError(f"bitmask {active} out of range for {n} candidates")
        return np.array([(int(active) >> k) & 1 for k in range(n)], dtype=bool)
    mask = np.asarray(active, dtype=bool).reshape(-1)
    if len(mask) != n:
        raise ValueError(f"bitmask has {len(mask)} entries for {n} candidates")
    return mask


def metrics_from_matrix(levels: np.ndarray, active) -> NetworkMetrics:
    mask = _as_bool_mask(active, levels.shape[0])
    n_cells = levels.shape[1]
    if n_cells == 0 or not mask.any():
        return NetworkMetrics(0.0, 0.0, int(mask.sum()))
    sub = levels[mask]
    return NetworkMetrics(
        float(sub.max(axis=0).sum()) / n_cells,
        float((sub > 0).sum()) / n_cells,
        int(mask.sum()),
    )


def evaluate_subset(candidates: Sequence[CoverageMap], active) -> NetworkMetrics:
    """Metrics of the network formed by the ``active`` candidates (bool sequence or int bitmask)."""
    return metrics_from_matrix(candidate_matrix(candidates).levels, active)


@numba.njit(cache=True)
def _gray_enumerate(starts, idx, lvl, n_cells, n, mode, threshold, alpha):
    """Visit every subset; mode 0 returns max signal sum, mode 1 the lexicographic
    optimum above ``threshold``, mode 2 the scalarised optimum.

    Returns (best_mask, best_sig, best_sat, best_count, max_sig).
    """
    cnt = np.zeros((n_cells, 6), dtype=np.int32)
    best = np.zeros(n_cells, dtype=np.int8)
    sig = 0
    sat = 0
    mask = 0
    count = 0
    max_sig = 0
    # the empty set is the first candidate solution
    b_mask = 0
    b_sig = 0
    b_sat = 0
    b_cnt = 0
    b_val = 0.0
    total = 1 << n
    for g in range(1, total):
        # bit flipped between gray(g-1) and gray(g) is the lowest set bit of g
        bit = 0
        while not (g >> bit) & 1:
            bit += 1
        mask ^= 1 << bit
        adding = (mask >> bit) & 1
        for p in range(starts[bit], starts[bit + 1]):
            c = idx[p]
            q = lvl[p]
            if adding:
                cnt[c, q] += 1
                sat += 1
                if q > best[c]:
                    sig += q - best[c]
                    best[c] = q
            else:
                cnt[c, q] -= 1
                sat -= 1
                if q == best[c] and cnt[c, q] == 0:
                    nb = q - 1
                    while nb > 0 and cnt[c, nb] == 0:
                        nb -= 1
                    sig -= q - nb
                    best[c] = nb
        count += 1 if adding else -1
        if sig > max_sig:
            max_sig = sig
        if mode == 1:
            if sig >= threshold:
                better = False
                if b_sig < threshold:
                    better = True
                elif count < b_cnt:
                    better = True
                elif count == b_cnt:
                    if sat < b_sat:
                        better = True
                    elif sat == b_sat and mask < b_mask:
                        better = True
                if better:
                    b_mask, b_sig, b_sat, b_cnt = mask, sig, sat, count
        elif mode == 2:
            val = sig / n_cells - alpha * count
            better = False
            if val > b_val:
                better = True
            elif val == b_val:
                if sat < b_sat or (sat == b_sat and mask < b_mask):
                    better = True
            if better:
                b_mask, b_sig, b_sat, b_cnt, b_val = mask, sig, sat, count, val
    return b_mask, b_sig, b_sat, b_cnt, max_sig


@dataclass(frozen=True)
class Objective:
    """``lexicographic``: maximise signal within ``eps``, then fewest RSUs, then least saturation.
    ``scalarized``: maximise ``mean_signal - alpha * rsu_count``.  Ties go to the lowest bitmask."""

    kind: str = "lexicographic"
    eps: float = DEFAULT_EPS
    alpha: float = 0.05

    def __post_init__(self):
        if self.kind not in ("lexicographic", "scalarized"):
            raise ValueError(f"unknown objective {self.kind!r}")


@dataclass(frozen=True)
class OptimalResult:
    mask: int
    active: tuple[bool, ...]
    metrics: NetworkMetrics
    evaluated: int


class TooManyCandidates(ValueError):
    pass


def _csr(levels: np.ndarray):
    starts = [0]
    idx, lvl = [], []
    for row in levels:
        nz = np.nonzero(row)[0]
        idx.extend(nz.tolist())
        lvl.extend(row[nz].tolist())
        starts.append(len(idx))
    return (
        np.asarray(starts, dtype=np.int64),
        np.asarray(idx, dtype=np.int64),
        np.asarray(lvl, dtype=np.int8),
    )


def brute_force_optimal(
    candidates: Sequence[CoverageMap] | CandidateMatrix,
    objective: Objective = Objective(),
    cap: int = DEFAULT_CAP,
) -> OptimalResult:
    levels = candidates.levels if isinstance(candidates, CandidateMatrix) else candidate_matrix(candidates).levels
    n, n_cells = levels.shape if levels.size else (len(levels), 0)
    if n > cap:
        raise TooManyCandidates(
            f"{n} candidates means {2 ** n:,} subsets; the cap is {cap}. "
            "Raise cap explicitly to accept the exponential run time, or split the instance."
        )
    if n == 0 or n_cells == 0:
        return OptimalResult(0, (False,) * n, NetworkMetrics(0.0, 0.0, 0), 1 << n)
    starts, idx, lvl = _csr(levels)
    if objective.kind == "lexicographic":
        _, _, _, _, max_sig = _gray_enumerate(starts, idx, lvl, n_cells, n, 0, 0.0, 0.0)
        threshold = max_sig - objective.eps * n_cells
        mask = _gray_enumerate(starts, idx, lvl, n_cells, n, 1, threshold, 0.0)[0]
    else:
        mask = _gray_enumerate(starts, idx, lvl, n_cells, n, 2, 0.0, objective.alpha)[0]
    mask = int(mask)
    active = _as_bool_mask(mask, n)
    return OptimalResult(mask, tuple(bool(a) for a in active), metrics_from_matrix(levels, active), 1 << n)


def objective_value(m: NetworkMetrics, objective: Objective) -> float:
    if objective.kind == "scalarized":
        return m.mean_signal - objective.alpha * m.rsu_count
    return m.mean_signal
