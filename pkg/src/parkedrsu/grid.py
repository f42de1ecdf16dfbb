"""Global cell grid, self-observed coverage maps and their wire codec.

All vehicles share one grid: a cell is the floor-division of a planar
coordinate (meters east/north of the scenario origin) by the cell size.
Row index ``i`` follows the northing, column index ``j`` the easting.

A :class:`CoverageMap` is an odd-order square window of signal levels
(0 = no coverage, 5 = excellent) anchored on the cell that contains the
vehicle.  Matrix element ``(r, c)`` corresponds to the global cell
``(anchor.i - h + r, anchor.j - h + c)`` with ``h = order // 2``.

Wire format (big-endian)::

    payload   ceil(order**2 * 3 / 8) bytes, 3 bits per cell, row-major,
              most significant bit first, zero padded at the end
    center_x  uint16, floor(x / COORD_RESOLUTION)
    center_y  uint16, floor(y / COORD_RESOLUTION)

An 11x11 map is 46 payload bytes + 4 coordinate bytes = 50 bytes.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

MAX_LEVEL = 5
BITS_PER_CELL = 3
COORD_RESOLUTION = 5.0  # meters per coordinate unit on the wire
COORD_MAX = 0xFFFF
DEFAULT_CELL_SIZE = 30.0
DEFAULT_ORDER = 11


class FormatError(ValueError):
    """Raised when a byte buffer is not a valid encoded coverage map."""


class GridMismatchError(ValueError):
    """Raised when maps built on different grids are combined."""


class GeoCoord(NamedTuple):
    x: float
    y: float


class CellIndex(NamedTuple):
    i: int
    j: int


def cell_of(p: tuple[float, float], cell_size: float = DEFAULT_CELL_SIZE) -> CellIndex:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"non-finite coordinate {p!r}")
    if not cell_size > 0:
        raise ValueError(f"cell_size must be positive, got {cell_size}")
    return CellIndex(math.floor(y / cell_size), math.floor(x / cell_size))


def cells_of(xy: np.ndarray, cell_size: float = DEFAULT_CELL_SIZE) -> np.ndarray:
    """Vectorised :func:`cell_of` for an ``(n, 2)`` array; returns ``(n, 2)`` int64 of (i, j)."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if not np.isfinite(xy).all():
        raise ValueError("non-finite coordinate in batch")
    out = np.empty(xy.shape, dtype=np.int64)
    out[:, 0] = np.floor(xy[:, 1] / cell_size)
    out[:, 1] = np.floor(xy[:, 0] / cell_size)
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.uint8, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CoverageMap:
    cells: np.ndarray
    center: GeoCoord
    cell_size: float = DEFAULT_CELL_SIZE
    outside: int = field(default=0, compare=False)  # observations dropped for falling off the window

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
            raise ValueError(f"coverage map must be square, got shape {cells.shape}")
        if cells.shape[0] % 2 != 1:
            raise ValueError(f"coverage map order must be odd, got {cells.shape[0]}")
        if cells.size and (cells.min() < 0 or cells.max() > MAX_LEVEL):
            raise ValueError("cell levels must lie in 0..5")
        object.__setattr__(self, "cells", _frozen(cells))
        object.__setattr__(self, "center", GeoCoord(float(self.center[0]), float(self.center[1])))

    @classmethod
    def empty(cls, center, order: int = DEFAULT_ORDER, cell_size: float = DEFAULT_CELL_SIZE) -> "CoverageMap":
        return cls(np.zeros((order, order), dtype=np.uint8), center, cell_size)

    @property
    def order(self) -> int:
        return self.cells.shape[0]

    @property
    def half(self) -> int:
        return self.order // 2

    @property
    def anchor(self) -> CellIndex:
        return cell_of(self.center, self.cell_size)

    @property
    def origin(self) -> CellIndex:
        """Global index of matrix element (0, 0)."""
        a = self.anchor
        return CellIndex(a.i - self.half, a.j - self.half)

    def local_index(self, at: CellIndex) -> tuple[int, int] | None:
        o = self.origin
        r, c = at[0] - o.i, at[1] - o.j
        if 0 <= r < self.order and 0 <= c < self.order:
            return r, c
        return None

    def level_at(self, at: CellIndex) -> int:
        rc = self.local_index(at)
        return 0 if rc is None else int(self.cells[rc])

    def nonzero_cells(self) -> set[CellIndex]:
        o = self.origin
        rs, cs = np.nonzero(self.cells)
        return {CellIndex(o.i + int(r), o.j + int(c)) for r, c in zip(rs, cs)}

    def coverage_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    def same_grid(self, other: "CoverageMap") -> bool:
        return self.cell_size == other.cell_size

    def __eq__(self, other):
        if not isinstance(other, CoverageMap):
            return NotImplemented
        return (
            self.center == other.center
            and self.cell_size == other.cell_size
            and np.array_equal(self.cells, other.cells)
        )

    def __hash__(self):
        return hash((self.center, self.cell_size, self.cells.tobytes()))


def record_observation(m: CoverageMap, at: CellIndex, q: int) -> CoverageMap:
    """Return ``m`` with cell ``at`` raised to at least ``q``.

    Observations falling outside the window leave the cells untouched and
    bump ``outside``.
    """
    if not 0 <= q <= MAX_LEVEL:
        raise ValueError(f"signal level {q} outside 0..5")
    rc = m.local_index(at)
    if rc is None:
        return CoverageMap(m.cells, m.center, m.cell_size, m.outside + 1)
    if m.cells[rc] >= q:
        return m
    cells = m.cells.copy()
    cells[rc] = q
    return CoverageMap(cells, m.center, m.cell_size, m.outside)


def record_observations(m: CoverageMap, cells: np.ndarray, levels: np.ndarray) -> tuple[CoverageMap, int]:
    """Batch form of :func:`record_observation`; also returns how many cells changed value."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    levels = np.asarray(levels, dtype=np.uint8).reshape(-1)
    if len(cells) == 0:
        return m, 0
    if levels.max() > MAX_LEVEL:
        raise ValueError("signal level outside 0..5")
    o = m.origin
    r = cells[:, 0] - o.i
    c = cells[:, 1] - o.j
    inside = (r >= 0) & (r < m.order) & (c >= 0) & (c < m.order)
    dropped = int((~inside).sum())
    new = m.cells.copy()
    np.maximum.at(new, (r[inside], c[inside]), levels[inside])
    changed = int(np.count_nonzero(new != m.cells))
    if changed == 0 and dropped == 0:
        return m, 0
    return CoverageMap(new, m.center, m.cell_size, m.outside + dropped), changed


def payload_size(order: int) -> int:
    return math.ceil(order * order * BITS_PER_CELL / 8)


def encoded_size(order: int) -> int:
    return payload_size(order) + 4


def _encode_coord(v: float) -> int:
    q = math.floor(v / COORD_RESOLUTION)
    if not 0 <= q <= COORD_MAX:
        raise ValueError(f"coordinate {v} m outside the encodable range [0, {COORD_MAX * COORD_RESOLUTION}]")
    return q


def encode(m: CoverageMap) -> bytes:
    flat = m.cells.reshape(-1).astype(np.uint8)
    # expand each level to 3 bits, MSB first, then let numpy pack (zero pads the tail)
    bits = ((flat[:, None] >> np.array([2, 1, 0], dtype=np.uint8)) & 1).reshape(-1)
    payload = np.packbits(bits).tobytes()
    coords = struct.pack(">HH", _encode_coord(m.center.x), _encode_coord(m.center.y))
    return payload + coords


def decode(b: bytes, order: int = DEFAULT_ORDER, cell_size: float = DEFAULT_CELL_SIZE) -> CoverageMap:
    if order < 1 or order % 2 != 1:
        raise FormatError(f"order must be a positive odd integer, got {order}")
    b = bytes(b)
    n_payload = payload_size(order)
    if len(b) != n_payload + 4:
        raise FormatError(f"expected {n_payload + 4} bytes for order {order}, got {len(b)}")
    n_cells = order * order
    bits = np.unpackbits(np.frombuffer(b[:n_payload], dtype=np.uint8))
    if bits[n_cells * BITS_PER_CELL:].any():
        raise FormatError("non-zero padding bits")
    triples = bits[: n_cells * BITS_PER_CELL].reshape(n_cells, 3).astype(np.uint8)
    levels = (triples[:, 0] << 2) | (triples[:, 1] << 1) | triples[:, 2]
    if (levels > MAX_LEVEL).any():
        bad = int(np.argmax(levels > MAX_LEVEL))
        raise FormatError(f"cell {divmod(bad, order)} holds undefined level {int(levels[bad])}")
    qx, qy = struct.unpack(">HH", b[n_payload:])
    center = GeoCoord(qx * COORD_RESOLUTION, qy * COORD_RESOLUTION)
    return CoverageMap(levels.reshape(order, order), center, cell_size)


def quantize_center(p: tuple[float, float]) -> GeoCoord:
    """The center a map will have after an encode/decode round trip."""
    return GeoCoord(
        math.floor(p[0] / COORD_RESOLUTION) * COORD_RESOLUTION,
        math.floor(p[1] / COORD_RESOLUTION) * COORD_RESOLUTION,
    )
