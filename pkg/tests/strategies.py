"""Hypothesis strategies shared by the property tests."""
from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from parkedrsu.grid import CoverageMap


@st.composite
def coverage_maps(draw, order=None, cell_size=30.0, span=600.0, density=None):
    n = draw(st.sampled_from([1, 3, 5, 7, 11])) if order is None else order
    x = draw(st.floats(0.0, span, allow_nan=False))
    y = draw(st.floats(0.0, span, allow_nan=False))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    p = draw(st.floats(0.0, 1.0)) if density is None else density
    cells = np.where(rng.random((n, n)) < p, rng.integers(1, 6, (n, n)), 0)
    return CoverageMap(cells.astype(np.uint8), (x, y), cell_size)


def random_map(rng: np.random.Generator, order: int = 11, span: float = 400.0, cell_size: float = 30.0,
               density: float = 0.5) -> CoverageMap:
    cells = np.where(rng.random((order, order)) < density, rng.integers(1, 6, (order, order)), 0)
    return CoverageMap(cells.astype(np.uint8), tuple(rng.uniform(0, span, 2)), cell_size)
