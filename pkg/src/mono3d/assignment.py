"""Image grid, per-cell object assignment, and the object mask used by the losses.

Cells are indexed ``(ix, iy)`` to match pixel ``(u, v)``; per-cell arrays are
stored row-major with shape ``(sy, sx)`` and are indexed ``[iy, ix]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .boxes import Box2D

DEFAULT_SIGMA_CELLS = 1.5


@dataclass(frozen=True)
class GridSpec:
    width: float
    height: float
    sx: int
    sy: int
    sigma_scope: float  # pixels

    def __post_init__(self):
        if self.sx < 1 or self.sy < 1:
            raise ValueError(f"grid must have at least one cell, got {self.sx}x{self.sy}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")
        if not self.sigma_scope > 0:
            raise ValueError(f"sigma_scope must be positive, got {self.sigma_scope}")

    @classmethod
    def from_cells(cls, width, height, sx, sy, sigma_cells: float = DEFAULT_SIGMA_CELLS) -> "GridSpec":
        """Build a grid whose assignment radius is given in cell sizes."""
        cell = max(width / sx, height / sy)
        return cls(float(width), float(height), int(sx), int(sy), sigma_cells * cell)

    @classmethod
    def from_stride(cls, width, height, stride: int = 32, sigma_cells: float = DEFAULT_SIGMA_CELLS) -> "GridSpec":
        sx = max(1, int(round(width / stride)))
        sy = max(1, int(round(height / stride)))
        return cls.from_cells(width, height, sx, sy, sigma_cells)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.sy, self.sx)

    @property
    def cell_size(self) -> tuple[float, float]:
        return (self.width / self.sx, self.height / self.sy)

    def cell_centers(self) -> np.ndarray:
        """Pixel centers of all cells, shape (sy, sx, 2)."""
        cw, ch = self.cell_size
        u = (np.arange(self.sx) + 0.5) * cw
        v = (np.arange(self.sy) + 0.5) * ch
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv], axis=-1)


def cell_center(g: tuple[int, int], grid: GridSpec) -> np.ndarray:
    ix, iy = g
    if not (0 <= ix < grid.sx and 0 <= iy < grid.sy):
        raise IndexError(f"cell {g} outside {grid.sx}x{grid.sy} grid")
    cw, ch = grid.cell_size
    return np.array([(ix + 0.5) * cw, (iy + 0.5) * ch])


@dataclass(frozen=True)
class CellAssignment:
    index: np.ndarray  # (sy, sx) int, -1 where unassigned

    @property
    def mask(self) -> np.ndarray:
        return self.index >= 0

    def cells_of(self, obj: int) -> list[tuple[int, int]]:
        iy, ix = np.nonzero(self.index == obj)
        return list(zip(ix.tolist(), iy.tolist()))


def assign(objects: Sequence[tuple[Box2D, float]], grid: GridSpec) -> CellAssignment:
    """Give each cell the closest-in-depth object whose 2D center lies within sigma_scope.

    Depth ties go to the earlier object in ``objects``.
    """
    if len(objects) == 0:
        return CellAssignment(np.full(grid.shape, -1, dtype=np.int64))
    centers = np.array([[b.u, b.v] for b, _ in objects], dtype=np.float64)
    depths = np.array([z for _, z in objects], dtype=np.float64)
    if np.any(~(depths > 0)):
        raise ValueError("object depths must be positive")
    offsets = grid.cell_centers()[:, :, None, :] - centers[None, None, :, :]
    within = np.hypot(offsets[..., 0], offsets[..., 1]) < grid.sigma_scope
    cost = np.where(within, depths[None, None, :], np.inf)
    # argmin returns the first minimum, which is the tie rule.
    best = np.argmin(cost, axis=-1)
    index = np.where(within.any(axis=-1), best, -1)
    return CellAssignment(index.astype(np.int64))
