from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import cell_dict, floor_cell
from parkedrsu.grid import (
    CellIndex,
    CoverageMap,
    FormatError,
    cell_of,
    cells_of,
    decode,
    encode,
    encoded_size,
    payload_size,
    quantize_center,
    record_observation,
    record_observations,
)
from strategies import coverage_maps


def test_cell_of_origin_and_boundaries():
    assert cell_of((0.0, 0.0), 30) == CellIndex(0, 0)
    assert cell_of((29.9, 29.9), 30) == CellIndex(0, 0)
    assert cell_of((30.0, 30.0), 30) == CellIndex(1, 1)
    # row follows y, column follows x
    assert cell_of((95.0, 10.0), 30) == CellIndex(0, 3)


def test_cell_of_rejects_non_finite():
    with pytest.raises(ValueError):
        cell_of((math.nan, 1.0))
    with pytest.raises(ValueError):
        cell_of((1.0, math.inf))
    with pytest.raises(ValueError):
        cells_of(np.array([[1.0, math.nan]]))


def test_cell_of_matches_floor_oracle_10k():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-5000, 5000, (10_000, 2))
    cs = 30.0
    batch = cells_of(pts, cs)
    for (x, y), (i, j) in zip(pts, batch):
        assert (i, j) == floor_cell(x, y, cs)
        assert cell_of((x, y), cs) == (i, j)


@given(st.floats(-1e5, 1e5), st.floats(-1e5, 1e5), st.floats(1.0, 200.0))
def test_partition_point_lies_in_its_cell(x, y, cs):
    i, j = cell_of((x, y), cs)
    assert j * cs <= x < (j + 1) * cs
    assert i * cs <= y < (i + 1) * cs


def test_record_observation_examples():
    m = CoverageMap.empty((165.0, 165.0), 11, 30)
    o = m.origin
    at = CellIndex(o.i + 2, o.j + 3)
    m2 = record_observation(m, at, 4)
    assert m2.cells[2, 3] == 4
    assert m.cells[2, 3] == 0  # the input is untouched
    m3 = record_observation(record_observation(m, at, 5), at, 2)
    assert m3.cells[2, 3] == 5


def test_record_observation_outside_window_is_counted():
    m = CoverageMap.empty((165.0, 165.0), 11, 30)
    far = CellIndex(m.anchor.i + 6, m.anchor.j)
    m2 = record_observation(m, far, 3)
    assert m2.coverage_count() == 0
    assert m2.outside == 1
    with pytest.raises(ValueError):
        record_observation(m, m.anchor, 6)


@given(st.lists(st.tuples(st.integers(-3, 13), st.integers(-3, 13), st.integers(0, 5)), max_size=60))
def test_record_observation_is_fold_max(obs):
    m = CoverageMap.empty((165.0, 165.0), 11, 30)
    o = m.origin
    expect = np.zeros((11, 11), dtype=int)
    outside = 0
    cur = m
    for r, c, q in obs:
        cur_before = cur.cells.copy()
        cur = record_observation(cur, CellIndex(o.i + r, o.j + c), q)
        assert (cur.cells >= cur_before).all()
        if 0 <= r < 11 and 0 <= c < 11:
            expect[r, c] = max(expect[r, c], q)
        else:
            outside += 1
    assert np.array_equal(cur.cells, expect)
    assert cur.outside == outside
    cells = np.array([(o.i + r, o.j + c) for r, c, _ in obs], dtype=np.int64).reshape(-1, 2)
    levels = np.array([q for *_, q in obs], dtype=np.uint8)
    batch, _ = record_observations(m, cells, levels)
    assert np.array_equal(batch.cells, expect)


def test_sizes():
    assert payload_size(11) == 46
    assert encoded_size(11) == 50
    assert payload_size(1) == 1


def test_encode_all_zero_11():
    m = CoverageMap.empty((100.0, 200.0), 11, 30)
    b = encode(m)
    assert len(b) == 50
    assert b[:46] == bytes(46)
    assert b[46:] == bytes([0, 20, 0, 40])


def test_encode_single_cell_level_5():
    m = CoverageMap(np.array([[5]], dtype=np.uint8), (0.0, 0.0))
    b = encode(m)
    assert len(b) == 5
    assert b[0] == 0b10100000


def test_encode_packs_msb_first_row_major():
    cells = np.zeros((3, 3), dtype=np.uint8)
    cells[0, 0], cells[0, 1], cells[0, 2] = 1, 2, 3
    b = encode(CoverageMap(cells, (0.0, 0.0)))
    # 001 010 011 000 ... -> 00101001 1000....
    assert b[0] == 0b00101001
    assert b[1] == 0b10000000
    assert len(b) == payload_size(3) + 4


@given(coverage_maps(span=5000.0))
def test_codec_round_trip(m):
    back = decode(encode(m), m.order, m.cell_size)
    assert np.array_equal(back.cells, m.cells)
    assert back.center == quantize_center(m.center)


def test_codec_round_trip_1000_random_maps():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        cells = rng.integers(0, 6, (11, 11)).astype(np.uint8)
        center = tuple(float(v) for v in rng.integers(0, 60000, 2) * 5.0)
        m = CoverageMap(cells, center, 30.0)
        assert decode(encode(m)) == m


def test_decode_rejects_bad_buffers():
    good = encode(CoverageMap.empty((0.0, 0.0), 11))
    with pytest.raises(FormatError):
        decode(good[:-1])
    with pytest.raises(FormatError):
        decode(good + b"\x00")
    bad = bytearray(good)
    bad[0] = 0b11100000  # first cell holds 7
    with pytest.raises(FormatError):
        decode(bytes(bad))
    bad = bytearray(good)
    bad[0] = 0b11000000  # first cell holds 6
    with pytest.raises(FormatError):
        decode(bytes(bad))
    bad = bytearray(good)
    bad[45] = 0b00000001  # 121 * 3 = 363 bits, so the last bit is padding
    with pytest.raises(FormatError):
        decode(bytes(bad))


def test_encode_rejects_unencodable_center():
    with pytest.raises(ValueError):
        encode(CoverageMap.empty((-10.0, 0.0), 11))


def test_map_invariants():
    with pytest.raises(ValueError):
        CoverageMap(np.zeros((4, 4), dtype=np.uint8), (0.0, 0.0))
    with pytest.raises(ValueError):
        CoverageMap(np.full((3, 3), 6, dtype=np.uint8), (0.0, 0.0))
    m = CoverageMap.empty((47.0, 95.0), 5, 30)
    assert m.anchor == cell_of(m.center, 30)
    assert m.local_index(m.anchor) == (2, 2)
    with pytest.raises(ValueError):
        m.cells[0, 0] = 1  # read-only


@given(coverage_maps())
def test_nonzero_cells_match_center_derived_oracle(m):
    assert {tuple(c) for c in m.nonzero_cells()} == set(cell_dict(m))
