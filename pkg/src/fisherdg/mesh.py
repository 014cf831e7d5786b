"""Uniform periodic meshes of the unit interval and unit square.

Cells are axis-aligned boxes of equal width ``h = 1/m`` per axis.  Cell
indices are flattened row-major over axes (axis 0 slowest), and every
face of the tessellation belongs to exactly one interface record whose
unit normal points from the lower-indexed ("minus") cell to its
periodic neighbor in the positive axis direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MeshSpec:
    """Mesh parameters: dimension (1 or 2) and cells per axis on [0,1]^dim."""

    dim: int
    cells_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.cells_per_axis < 1:
            raise ValueError(f"cells_per_axis must be >= 1, got {self.cells_per_axis}")

    @property
    def h(self) -> float:
        return 1.0 / self.cells_per_axis

    @property
    def n_cells(self) -> int:
        return self.cells_per_axis ** self.dim


@dataclass(frozen=True)
class Interface:
    """Shared face between two cells, with the normal pointing minus -> plus."""

    index: int
    cell_minus: int
    cell_plus: int
    axis: int
    normal: tuple[float, ...]
    # Origin of the face in physical coordinates; the face spans h along
    # every axis other than `axis` (a point in 1D, a segment in 2D).
    origin: tuple[float, ...]


class Mesh:
    """Immutable uniform periodic mesh; safe to share across threads."""

    def __init__(self, spec: MeshSpec):
        self.spec = spec
        self.dim = spec.dim
        self.m = spec.cells_per_axis
        self.h = spec.h
        self.n_cells = spec.n_cells
        # cell_multi[c] = multi-index of cell c, row-major over axes
        if self.dim == 1:
            self.cell_multi = np.arange(self.m, dtype=np.int64)[:, None]
        else:
            ii, jj = np.meshgrid(np.arange(self.m), np.arange(self.m), indexing="ij")
            self.cell_multi = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(np.int64)
        self.cell_origin = self.cell_multi * self.h
        self._neighbors = np.empty((self.n_cells, self.dim, 2), dtype=np.int64)
        for axis in range(self.dim):
            for side, step in ((0, -1), (1, +1)):
                shifted = self.cell_multi.copy()
                shifted[:, axis] = (shifted[:, axis] + step) % self.m
                self._neighbors[:, axis, side] = self.flat_index(shifted)
        self.interfaces = self._build_interfaces()

    def flat_index(self, multi) -> np.ndarray:
        multi = np.asarray(multi)
        if self.dim == 1:
            return multi[..., 0]
        return multi[..., 0] * self.m + multi[..., 1]

    def neighbor(self, cell: int, axis: int, side: int) -> int:
        """Periodic neighbor of `cell` across its face on `axis` (side 0=low, 1=high)."""
        return int(self._neighbors[cell, axis, side])

    def _build_interfaces(self) -> list[Interface]:
        faces = []
        k = 0
        for axis in range(self.dim):
            normal = tuple(1.0 if a == axis else 0.0 for a in range(self.dim))
            for c in range(self.n_cells):
                plus = self.neighbor(c, axis, 1)
                origin = list(self.cell_origin[c])
                origin[axis] += self.h  # high face of the minus cell
                faces.append(Interface(k, c, plus, axis, normal, tuple(origin)))
                k += 1
        return faces

    @property
    def n_interfaces(self) -> int:
        return self.dim * self.n_cells

    def cell_volume(self, cell: int) -> float:
        return self.h ** self.dim


def build_mesh(spec: MeshSpec) -> Mesh:
    return Mesh(spec)


def locate_cell(mesh: Mesh, x) -> tuple[int, np.ndarray]:
    """Map a point in [0,1]^dim to (cell index, local coordinate in [0,1]^dim).

    A point lying exactly on a shared face belongs to the cell whose
    origin it is (the face is owned by the cell on its low side); the
    domain endpoint 1.0 belongs to the last cell with local coordinate 1.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (mesh.dim,):
        raise ValueError(f"expected a point with {mesh.dim} coordinates, got shape {x.shape}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"point {x} outside [0,1]^{mesh.dim}")
    scaled = x * mesh.m
    multi = np.minimum(np.floor(scaled).astype(np.int64), mesh.m - 1)
    local = scaled - multi
    return int(mesh.flat_index(multi)), local
