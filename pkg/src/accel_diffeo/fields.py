"""Periodic raster containers on a uniform 2D grid.

Rasters are stored row-major as ``(height, width)`` float64 arrays, so
``data[y, x]``. The first spatial axis (x, "axis 1") runs along numpy axis 1,
the second (y, "axis 2") along numpy axis 0. Fields are immutable: the stored
arrays are read-only views.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    dx: float = 1.0

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise ValueError(
                f"grid must be at least 4x4, got {self.width}x{self.height}")
        if not (self.dx > 0 and np.isfinite(self.dx)):
            raise ValueError(f"dx must be positive and finite, got {self.dx}")

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def size(self):
        return self.width * self.height

    @property
    def cell_area(self):
        return self.dx * self.dx

    @property
    def area(self):
        return self.size * self.cell_area

    @classmethod
    def like(cls, array, dx=1.0):
        h, w = np.shape(array)
        return cls(width=w, height=h, dx=dx)


def _frozen_raster(grid, data, name):
    arr = np.asarray(data, dtype=np.float64)
    if arr.shape != grid.shape:
        raise ValueError(f"{name}: expected shape {grid.shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: raster contains NaN or Inf")
    view = arr.view()
    view.flags.writeable = False
    return view


def _check_same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError(f"grid mismatch: {g} vs {f.grid}")
    return g


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_raster(self.grid, self.data, "data"))

    @classmethod
    def from_array(cls, array, dx=1.0):
        return cls(GridSpec.like(array, dx), array)

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, float(value)))

    def total(self):
        """Discrete integral: sum times cell area."""
        return float(self.data.sum() * self.grid.cell_area)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: GridSpec
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vx", _frozen_raster(self.grid, self.vx, "vx"))
        object.__setattr__(self, "vy", _frozen_raster(self.grid, self.vy, "vy"))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid, cx, cy):
        return cls(grid, np.full(grid.shape, float(cx)), np.full(grid.shape, float(cy)))

    def norm(self):
        """Per-pixel Euclidean length as a raster."""
        return np.hypot(self.vx, self.vy)

    def dot(self, other):
        """Discrete L2 inner product (sum times cell area)."""
        _check_same_grid(self, other)
        s = np.sum(self.vx * other.vx) + np.sum(self.vy * other.vy)
        return float(s * self.grid.cell_area)


@dataclass(frozen=True, eq=False)
class MapField:
    """A map phi(x) = x + u(x) stored through its periodic displacement u."""

    grid: GridSpec
    ux: np.ndarray
    uy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ux", _frozen_raster(self.grid, self.ux, "ux"))
        object.__setattr__(self, "uy", _frozen_raster(self.grid, self.uy, "uy"))

    @classmethod
    def identity(cls, grid):
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    @classmethod
    def translation(cls, grid, dx, dy):
        return cls(grid, np.full(grid.shape, float(dx)), np.full(grid.shape, float(dy)))

    def positions(self):
        """Absolute sample positions (px, py) = x + u(x) in pixel units."""
        h, w = self.grid.shape
        ys, xs = np.mgrid[0:h, 0:w]
        return xs + self.ux, ys + self.uy

    def displacement(self):
        return VectorField(self.grid, self.ux, self.uy)


@dataclass(frozen=True, eq=False)
class JacobianField:
    """Per-pixel 2x2 matrix; entry (i, j) is d(component i)/d(axis j)."""

    grid: GridSpec
    j11: np.ndarray
    j12: np.ndarray
    j21: np.ndarray
    j22: np.ndarray

    def __post_init__(self):
        for name in ("j11", "j12", "j21", "j22"):
            object.__setattr__(self, name, _frozen_raster(self.grid, getattr(self, name), name))

    def maxabs(self):
        """Per-pixel max absolute entry, the |Dv| measure used for CFL."""
        return np.maximum.reduce([np.abs(self.j11), np.abs(self.j12),
                                  np.abs(self.j21), np.abs(self.j22)])

    def det(self):
        return self.j11 * self.j22 - self.j12 * self.j21
