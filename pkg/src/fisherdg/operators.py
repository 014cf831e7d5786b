"""Precomputed reference-cell tables shared by assembly and the RHS kernels.

A :class:`Discretization` bundles a mesh, a Lagrange basis, and a
Clenshaw-Curtis rule, and tabulates basis values/gradients at the volume
and face quadrature points once.  Velocity-dependent tables are built
separately (velocities are constant in time, so they are also built once
per run).

Face enumeration per cell: face f = 2*axis + side with side 0 the low
face and side 1 the high face of the cell; interface k = axis*n_cells + c
couples cell c (minus side, its high face on `axis`) with its periodic
neighbor in the +axis direction (plus side, its low face).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, QuadRule, clenshaw_curtis, tensor_eval, tensor_grad, tensor_index
from .mesh import Mesh


class Discretization:
    """Geometry + basis + quadrature with all reference tables materialized."""

    def __init__(self, mesh: Mesh, basis: BasisSpec, n_q: int | None = None):
        self.mesh = mesh
        self.basis = basis
        if n_q is None:
            n_q = 2 * basis.order + 3
        self.n_q = n_q
        self.rule = clenshaw_curtis(n_q)
        self.dim = mesh.dim
        self.h = mesh.h
        self.n_cells = mesh.n_cells
        self.n_loc = basis.n_local(mesh.dim)
        self._tabulate_volume()
        self._tabulate_faces()

    # -- reference tables ------------------------------------------------

    def _tabulate_volume(self):
        dim, rule = self.dim, self.rule
        if dim == 1:
            pts = rule.nodes[:, None]
            w = rule.weights.copy()
        else:
            a, b = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
            pts = np.stack([a.ravel(), b.ravel()], axis=1)
            w = np.outer(rule.weights, rule.weights).ravel()
        self.n_qv = len(pts)
        self.vol_points = pts                      # (n_qv, dim), reference coords
        self.w_vol = w                             # reference weights, sum 1
        self.w_vol_phys = w * self.h ** dim        # physical cell measure folded in
        self.phi_vol = np.empty((self.n_qv, self.n_loc))
        self.dphi_vol = np.empty((self.n_qv, self.n_loc, dim))
        for i in range(self.n_loc):
            mi = tensor_index(self.basis, i, dim)
            for q in range(self.n_qv):
                self.phi_vol[q, i] = tensor_eval(self.basis, mi, pts[q])
                self.dphi_vol[q, i] = tensor_grad(self.basis, mi, pts[q])
        self.dphi_vol_phys = self.dphi_vol / self.h

    def _tabulate_faces(self):
        dim = self.dim
        self.n_faces = 2 * dim
        if dim == 1:
            fpts = np.zeros((1, 0))
            self.w_face = np.array([1.0])
        else:
            fpts = self.rule.nodes[:, None]
            self.w_face = self.rule.weights.copy()
        self.n_qf = len(fpts)
        self.w_face_phys = self.w_face * self.h ** (dim - 1)
        self.face_points = np.empty((self.n_faces, self.n_qf, dim))
        self.phi_face = np.empty((self.n_faces, self.n_qf, self.n_loc))
        for axis in range(dim):
            for side in (0, 1):
                f = 2 * axis + side
                for j in range(self.n_qf):
                    p = np.empty(dim)
                    p[axis] = float(side)
                    p[[a for a in range(dim) if a != axis]] = fpts[j]
                    self.face_points[f, j] = p
                    for i in range(self.n_loc):
                        mi = tensor_index(self.basis, i, dim)
                        self.phi_face[f, j, i] = tensor_eval(self.basis, mi, p)
        # plus-side neighbor of cell c across its high face on each axis
        self.nb_hi = np.empty((dim, self.n_cells), dtype=np.int64)
        for axis in range(dim):
            for c in range(self.n_cells):
                self.nb_hi[axis, c] = self.mesh.neighbor(c, axis, 1)

    # -- physical point helpers -------------------------------------------

    def cell_points(self, ref_points: np.ndarray) -> np.ndarray:
        """Physical coordinates of reference points in every cell: (n_cells, n_pts, dim)."""
        return self.mesh.cell_origin[:, None, :] + ref_points[None, :, :] * self.h

    def node_points(self) -> np.ndarray:
        """Physical positions of the basis nodes, (n_cells, n_loc, dim)."""
        return self.cell_points(self.basis.local_nodes(self.dim))

    def face_phys_points(self, axis: int) -> np.ndarray:
        """Physical points of the high face of every cell on `axis`: (n_cells, n_qf, dim)."""
        ref = self.face_points[2 * axis + 1]
        return self.cell_points(ref)

    # -- convenience evaluation --------------------------------------------

    def eval_coeffs(self, coeffs: np.ndarray, table: np.ndarray) -> np.ndarray:
        """Evaluate sum_i c_i phi_i at tabulated points: coeffs (n_cells, n_loc) x (n_pts, n_loc)."""
        return coeffs @ table.T

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolation of a scalar field fn(points (...,dim)) -> (n_cells, n_loc)."""
        pts = self.node_points()
        return np.asarray(fn(pts), dtype=float)


@dataclass
class VelocityTables:
    """Velocity values tabulated where the solver needs them.

    mode 'nodal' expands the velocity in the Lagrange basis of each cell
    and tabulates that expansion (the discrete divergence is the exact
    divergence of the expansion); mode 'analytic' evaluates the velocity
    and its analytic divergence pointwise at the quadrature nodes.
    """

    mode: str
    u_nodal: np.ndarray        # (n_cells, n_loc, dim) values at basis nodes
    u_vol: np.ndarray          # (n_cells, n_qv, dim)
    divu_vol: np.ndarray       # (n_cells, n_qv)
    uproj_vol: np.ndarray      # (n_cells, n_qv, n_loc): dphi_i(q) . u(c,q), physical
    un_iface_minus: np.ndarray  # (dim, n_cells, n_qf): u . nu from the minus side
    un_iface_plus: np.ndarray   # (dim, n_cells, n_qf): u . nu from the plus side
    un_face_out: np.ndarray    # (n_cells, 2*dim, n_qf): u . outward normal, own side
    u_max: float               # max over basis nodes of |u| (1D) / |ux|+|uy| (2D)


def velocity_tables(disc: Discretization, velocity, mode: str = "nodal") -> VelocityTables:
    """Tabulate a :class:`~fisherdg.assembly.VelocityField` on a discretization."""
    if mode not in ("nodal", "analytic"):
        raise ValueError(f"unknown velocity mode {mode!r}")
    dim = disc.dim
    u_nodal = velocity(disc.node_points())
    if mode == "nodal":
        u_vol = np.einsum("cid,qi->cqd", u_nodal, disc.phi_vol)
        divu_vol = np.einsum("cid,qid->cq", u_nodal, disc.dphi_vol_phys)
        un_face = np.empty((disc.n_cells, disc.n_faces, disc.n_qf))
        for f in range(disc.n_faces):
            axis, side = divmod(f, 2)
            sign = 1.0 if side == 1 else -1.0
            un_face[:, f, :] = sign * (u_nodal[:, :, axis] @ disc.phi_face[f].T)
    else:
        u_vol = _eval_velocity(velocity, disc.cell_points(disc.vol_points))
        divu_vol = velocity.divergence(disc.cell_points(disc.vol_points))
        un_face = np.empty((disc.n_cells, disc.n_faces, disc.n_qf))
        for f in range(disc.n_faces):
            axis, side = divmod(f, 2)
            sign = 1.0 if side == 1 else -1.0
            ref = disc.face_points[f]
            uvals = _eval_velocity(velocity, disc.cell_points(ref))
            un_face[:, f, :] = sign * uvals[:, :, axis]
    uproj = np.einsum("cqd,qid->cqi", u_vol, disc.dphi_vol_phys)
    # interface views: minus side = own high face of cell c; plus side = low
    # face of the +axis neighbor, with the interface normal (+axis) fixed
    un_minus = np.empty((dim, disc.n_cells, disc.n_qf))
    un_plus = np.empty((dim, disc.n_cells, disc.n_qf))
    for axis in range(dim):
        un_minus[axis] = un_face[:, 2 * axis + 1, :]
        # neighbor's outward normal on its low face is -axis; flip sign
        un_plus[axis] = -un_face[disc.nb_hi[axis], 2 * axis + 0, :]
    if dim == 1:
        u_max = float(np.max(np.abs(u_nodal)))
    else:
        u_max = float(np.max(np.abs(u_nodal).sum(axis=2)))
    return VelocityTables(mode, u_nodal, u_vol, divu_vol, uproj,
                          un_minus, un_plus, un_face, u_max)


def _eval_velocity(velocity, points: np.ndarray) -> np.ndarray:
    return np.asarray(velocity(points), dtype=float)


def error_rule(n_q: int) -> QuadRule:
    """Over-integration rule used for error measurement: 2*n_q + 1 points."""
    return clenshaw_curtis(2 * n_q + 1)
