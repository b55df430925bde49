"""Sparse raster masks on a metric grid: the footprints attacks infer and metrics compare."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geo import GeoPoint, LocalFrame

DEFAULT_CELL_M = 10.0
_OFFSET = 1 << 30
_SHIFT = 1 << 31


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class AreaGrid:
    """Square cells of ``cell_m`` meters laid over a local frame.

    Cell ``(i, j)`` covers ``x in [i*c, (i+1)*c)`` and ``y in [j*c, (j+1)*c)``.
    """

    frame: LocalFrame
    cell_m: float = DEFAULT_CELL_M

    @classmethod
    def around(cls, origin: GeoPoint, cell_m: float = DEFAULT_CELL_M) -> "AreaGrid":
        return cls(LocalFrame.at(GeoPoint(round(origin.lat, 2), round(origin.lon, 2))), cell_m)

    @classmethod
    def for_trace(cls, trace, cell_m: float = DEFAULT_CELL_M) -> "AreaGrid":
        if len(trace) == 0:
            return cls.around(GeoPoint(0.0, 0.0), cell_m)
        return cls.around(GeoPoint(float(np.median(trace.lats)), float(np.median(trace.lons))), cell_m)

    @property
    def cell_area_km2(self) -> float:
        return self.cell_m * self.cell_m / 1e6

    def project(self, lats, lons):
        return self.frame.project(lats, lons)

    def cell_index(self, x, y):
        return (np.floor(np.asarray(x) / self.cell_m).astype(np.int64),
                np.floor(np.asarray(y) / self.cell_m).astype(np.int64))


def encode(i, j) -> np.ndarray:
    return (np.asarray(i, dtype=np.int64) + _OFFSET) * _SHIFT + (np.asarray(j, dtype=np.int64) + _OFFSET)


def decode(codes):
    codes = np.asarray(codes, dtype=np.int64)
    return codes // _SHIFT - _OFFSET, codes % _SHIFT - _OFFSET


@dataclass(frozen=True, eq=False)
class AreaEstimate:
    """Set of raster cells; ``cells`` holds sorted unique cell codes."""

    grid: AreaGrid
    cells: np.ndarray

    @classmethod
    def empty(cls, grid: AreaGrid) -> "AreaEstimate":
        return cls(grid, np.empty(0, dtype=np.int64))

    @classmethod
    def from_cells(cls, grid: AreaGrid, i, j) -> "AreaEstimate":
        return cls(grid, np.unique(encode(i, j)))

    def __len__(self):
        return len(self.cells)

    def __bool__(self):
        return len(self.cells) > 0

    def __eq__(self, other):
        return (isinstance(other, AreaEstimate) and self.grid == other.grid
                and np.array_equal(self.cells, other.cells))

    @property
    def area_km2(self) -> float:
        return len(self.cells) * self.grid.cell_area_km2

    def _check(self, other: "AreaEstimate"):
        if self.grid != other.grid:
            raise GridMismatchError("areas live on different grids")

    def __and__(self, other):
        self._check(other)
        return AreaEstimate(self.grid, np.intersect1d(self.cells, other.cells, assume_unique=True))

    def __or__(self, other):
        self._check(other)
        return AreaEstimate(self.grid, np.union1d(self.cells, other.cells))

    def __sub__(self, other):
        self._check(other)
        return AreaEstimate(self.grid, np.setdiff1d(self.cells, other.cells, assume_unique=True))

    def contains_xy(self, x, y) -> np.ndarray:
        i, j = self.grid.cell_index(x, y)
        codes = np.atleast_1d(encode(i, j))
        if not len(self.cells):
            return np.zeros(len(codes), dtype=bool)
        pos = np.minimum(np.searchsorted(self.cells, codes), len(self.cells) - 1)
        return self.cells[pos] == codes

    def contains(self, lats, lons) -> np.ndarray:
        return self.contains_xy(*self.grid.project(np.atleast_1d(lats), np.atleast_1d(lons)))

    def bbox(self) -> tuple[float, float, float, float]:
        """(south, west, north, east) of the covered cells, in degrees."""
        if not len(self.cells):
            raise ValueError("empty area has no bounding box")
        i, j = decode(self.cells)
        c = self.grid.cell_m
        lat0, lon0 = self.grid.frame.unproject(i.min() * c, j.min() * c)
        lat1, lon1 = self.grid.frame.unproject((i.max() + 1) * c, (j.max() + 1) * c)
        return float(lat0), float(lon0), float(lat1), float(lon1)


def disk_union(grid: AreaGrid, x, y, radius: float, chunk: int = 4096) -> AreaEstimate:
    """Cells whose centers lie within ``radius`` meters of any of the given points."""
    pts = np.unique(np.column_stack([np.asarray(x, float), np.asarray(y, float)]).reshape(-1, 2), axis=0)
    if len(pts) == 0:
        return AreaEstimate.empty(grid)
    c = grid.cell_m
    m = int(math.ceil(radius / c)) + 1
    oi, oj = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
    oi, oj = oi.ravel(), oj.ravel()
    r2 = radius * radius
    found = []
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        bi = np.floor(p[:, 0] / c).astype(np.int64)
        bj = np.floor(p[:, 1] / c).astype(np.int64)
        ci = bi[:, None] + oi[None, :]
        cj = bj[:, None] + oj[None, :]
        dx = (ci + 0.5) * c - p[:, 0:1]
        dy = (cj + 0.5) * c - p[:, 1:2]
        hit = dx * dx + dy * dy <= r2
        found.append(np.unique(encode(ci[hit], cj[hit])))
    return AreaEstimate(grid, np.unique(np.concatenate(found)))


def square_union(grid: AreaGrid, x, y, side: float) -> AreaEstimate:
    """Axis-aligned squares of ``side`` meters centered on each point.

    Each square holds exactly ``(side / cell)**2`` cells when ``side`` is a
    multiple of the cell size.
    """
    c = grid.cell_m
    n = int(round(side / c))
    codes = []
    for px, py in zip(np.atleast_1d(x), np.atleast_1d(y)):
        i0 = math.ceil((px - side / 2) / c - 0.5)
        j0 = math.ceil((py - side / 2) / c - 0.5)
        ii, jj = np.meshgrid(np.arange(i0, i0 + n), np.arange(j0, j0 + n), indexing="ij")
        codes.append(encode(ii.ravel(), jj.ravel()))
    if not codes:
        return AreaEstimate.empty(grid)
    return AreaEstimate(grid, np.unique(np.concatenate(codes)))
