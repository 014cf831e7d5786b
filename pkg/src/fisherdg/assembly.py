"""Per-cell mass/stiffness blocks and interface fluxes.

Sign conventions are fixed so that the semidiscrete system reads
``M rdot + K r + g = 0`` per cell, i.e. ``rdot = -M^{-1} (K r + g)``:

* ``M_ij   = int phi_i phi_j`` (Fisher-Rao variant divides by rho_hat),
* ``K_ij   = -int Dphi_i phi_j . u`` for plain advection (gradient on the
  test function, row index i), and for the Fisher-Rao variant the
  integrated-by-parts three-term form below,
* ``g_i    = oint phi_i f`` over the cell boundary with outward normal
  (Fisher-Rao variant divides the integrand by the cell's own trace).

The Fisher-Rao stiffness expands the velocity in the cell's Lagrange
basis (u = sum_l u_l phi_l) and reads

``K_ij = int phi_i phi_l Dphi_j . u_l / rho
       + int phi_i phi_j Dphi_l . u_l / rho
       - oint phi_i phi_j phi_l u_l . nu / rho``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operators import Discretization, VelocityTables, velocity_tables


class PositivityLost(Exception):
    """Raised when a Fisher-Rao weighted integrand meets a non-positive density.

    Attributes identify the offending cell, the kind of quadrature node
    ('volume' or 'face'), its index, the density value there, and (once
    known) the simulation time and Runge-Kutta stage.
    """

    def __init__(self, cell: int, node_kind: str, node: int, value: float,
                 t: float | None = None, stage: int | None = None):
        self.cell = cell
        self.node_kind = node_kind
        self.node = node
        self.value = value
        self.t = t
        self.stage = stage
        super().__init__(self._message())

    def _message(self) -> str:
        msg = (f"density {self.value:.3e} <= 0 at {self.node_kind} quadrature "
               f"node {self.node} of cell {self.cell}")
        if self.t is not None:
            msg += f" at t={self.t:.6g}"
        if self.stage is not None:
            msg += f" (stage {self.stage})"
        return msg

    def with_context(self, t: float, stage: int | None = None) -> "PositivityLost":
        return PositivityLost(self.cell, self.node_kind, self.node, self.value, t, stage)


@dataclass
class DensityState:
    """Galerkin coefficients of the approximate density.

    Layout: ``coeffs[cell * n_loc + local_node]``; with a nodal Lagrange
    basis the coefficients are point values at the cell's basis nodes.
    The polynomial is discontinuous across cell interfaces.
    """

    disc: Discretization
    coeffs: np.ndarray

    def __post_init__(self):
        expected = self.disc.n_cells * self.disc.n_loc
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (expected,):
            raise ValueError(f"expected {expected} coefficients, got {self.coeffs.shape}")

    @property
    def by_cell(self) -> np.ndarray:
        return self.coeffs.reshape(self.disc.n_cells, self.disc.n_loc)

    def copy(self) -> "DensityState":
        return DensityState(self.disc, self.coeffs.copy())

    @classmethod
    def from_function(cls, disc: Discretization, fn) -> "DensityState":
        """Nodal interpolant of a scalar field."""
        vals = disc.interpolate(fn)
        return cls(disc, vals.reshape(-1))

    def eval_at_reference(self, table: np.ndarray) -> np.ndarray:
        """Evaluate on tabulated reference points in every cell: (n_cells, n_pts)."""
        return self.by_cell @ table.T

    def eval_points(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the piecewise polynomial at arbitrary physical points."""
        from .basis import tensor_eval, tensor_index
        from .mesh import locate_cell

        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(points))
        rc = self.by_cell
        for n, x in enumerate(points):
            cell, local = locate_cell(self.disc.mesh, x)
            val = 0.0
            for i in range(self.disc.n_loc):
                mi = tensor_index(self.disc.basis, i, self.disc.dim)
                val += rc[cell, i] * tensor_eval(self.disc.basis, mi, local)
            out[n] = val
        return out

    def cell_means(self) -> np.ndarray:
        """Exact cell averages (the volume rule integrates degree p exactly)."""
        return self.eval_at_reference(self.disc.phi_vol) @ self.disc.w_vol

    def total_mass(self) -> float:
        return float(self.cell_means().sum() * self.disc.h ** self.disc.dim)


@dataclass(frozen=True)
class VelocityField:
    """Constant-in-time velocity with an analytic divergence.

    ``fn`` maps points of shape (..., dim) to velocity vectors of shape
    (..., dim); ``div_fn`` maps the same points to the scalar divergence.
    """

    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    div_fn: Callable[[np.ndarray], np.ndarray]
    name: str = "velocity"
    # conservative bound on the advection speed, used by reference tracers
    speed_bound: float = field(default=0.0)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(points, dtype=float)), dtype=float)

    def divergence(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.div_fn(np.asarray(points, dtype=float)), dtype=float)

    def on(self, disc: Discretization, mode: str = "nodal") -> VelocityTables:
        return velocity_tables(disc, self, mode)


def velocity_1d(fn, derivative, name="velocity", speed_bound=None) -> VelocityField:
    """Wrap scalar callables u(x), u'(x) into a 1D VelocityField."""

    def vec(points):
        x = points[..., 0]
        return np.asarray(fn(x))[..., None]

    def div(points):
        return np.asarray(derivative(points[..., 0]))

    if speed_bound is None:
        xs = np.linspace(0.0, 1.0, 4097)
        speed_bound = float(np.max(np.abs(fn(xs))))
    return VelocityField(1, vec, div, name, speed_bound)


def velocity_2d(fx, fy, div, name="velocity", speed_bound=None) -> VelocityField:
    """Wrap component callables ux(x,y), uy(x,y) and their divergence."""

    def vec(points):
        x, y = points[..., 0], points[..., 1]
        return np.stack([np.asarray(fx(x, y), dtype=float),
                         np.asarray(fy(x, y), dtype=float)], axis=-1)

    def divergence(points):
        x, y = points[..., 0], points[..., 1]
        return np.asarray(div(x, y), dtype=float)

    if speed_bound is None:
        xs = np.linspace(0.0, 1.0, 257)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        speed_bound = float(np.max(np.abs(fx(X, Y)) + np.abs(fy(X, Y))))
    return VelocityField(2, vec, divergence, name, speed_bound)


# -- per-cell blocks -----------------------------------------------------


def _weighted_gram(weights: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Sum_q w_q phi_i(q) phi_j(q) as B^T B, which is symmetric bit-exactly."""
    scaled = table * np.sqrt(weights)[:, None]
    return scaled.T @ scaled


def mass_block(disc: Discretization, cell: int) -> np.ndarray:
    """Plain mass block M_ij = int_cell phi_i phi_j (identical for all cells)."""
    return _weighted_gram(disc.w_vol_phys, disc.phi_vol)


def _cell_density_at(disc: Discretization, state: DensityState, cell: int,
                     table: np.ndarray) -> np.ndarray:
    return table @ state.by_cell[cell]


def _require_positive(vals: np.ndarray, cell: int, kind: str):
    bad = np.flatnonzero(vals <= 0.0)
    if bad.size:
        raise PositivityLost(cell, kind, int(bad[0]), float(vals[bad[0]]))


def fisher_rao_mass_block(disc: Discretization, cell: int, state: DensityState) -> np.ndarray:
    """M_ij = int_cell phi_i phi_j / rho_hat; requires rho_hat > 0 at the volume nodes."""
    rho = _cell_density_at(disc, state, cell, disc.phi_vol)
    _require_positive(rho, cell, "volume")
    return _weighted_gram(disc.w_vol_phys / rho, disc.phi_vol)


def dg_stiffness_block(disc: Discretization, cell: int, vel: VelocityTables) -> np.ndarray:
    """K_ij = -int_cell Dphi_i phi_j . u (weak-form volume term)."""
    return -np.einsum("q,qid,qj,qd->ij", disc.w_vol_phys, disc.dphi_vol_phys,
                      disc.phi_vol, vel.u_vol[cell])


def fisher_rao_stiffness_block(disc: Discretization, cell: int, state: DensityState,
                               vel: VelocityTables) -> np.ndarray:
    """Three-term Fisher-Rao stiffness block (see module docstring)."""
    rho = _cell_density_at(disc, state, cell, disc.phi_vol)
    _require_positive(rho, cell, "volume")
    w = disc.w_vol_phys / rho
    # int phi_i phi_l Dphi_j . u_l / rho  with sum_l phi_l u_l = u at the node
    t1 = np.einsum("q,qi,qj->ij", w, disc.phi_vol, vel.uproj_vol[cell])
    # int phi_i phi_j Dphi_l . u_l / rho  with sum_l Dphi_l . u_l = div u
    t2 = np.einsum("q,qi,qj->ij", w * vel.divu_vol[cell], disc.phi_vol, disc.phi_vol)
    # - oint phi_i phi_j phi_l u_l . nu / rho  over all faces, outward normal
    t3 = np.zeros((disc.n_loc, disc.n_loc))
    for f in range(disc.n_faces):
        tr = disc.phi_face[f]
        rho_f = _cell_density_at(disc, state, cell, tr)
        _require_positive(rho_f, cell, "face")
        un = vel.un_face_out[cell, f]
        t3 -= np.einsum("j,ji,jk->ik", disc.w_face_phys * un / rho_f, tr, tr)
    return t1 + t2 + t3


# -- interface fluxes ----------------------------------------------------


def _interface_traces(disc: Discretization, state: DensityState, iface) -> tuple[np.ndarray, np.ndarray]:
    """Density traces (minus, plus) at the face quadrature nodes of an interface."""
    axis = iface.axis
    tr_minus = disc.phi_face[2 * axis + 1]
    tr_plus = disc.phi_face[2 * axis + 0]
    return (tr_minus @ state.by_cell[iface.cell_minus],
            tr_plus @ state.by_cell[iface.cell_plus])


def upwind_flux(disc: Discretization, iface, state: DensityState,
                vel: VelocityTables) -> np.ndarray:
    """Upwind flux wrt the interface normal: the upstream trace times u . nu.

    ``u . nu = 0`` yields zero flux.  The advective speed is taken from
    the minus side (both sides coincide for continuous velocity data).
    """
    rho_m, rho_p = _interface_traces(disc, state, iface)
    un = vel.un_iface_minus[iface.axis, iface.cell_minus]
    return np.where(un > 0.0, rho_m * un, np.where(un < 0.0, rho_p * un, 0.0))


def lax_friedrichs_flux(disc: Discretization, iface, state: DensityState,
                        vel: VelocityTables, alpha: float | None = None) -> np.ndarray:
    """f = (rho+ + rho-)/2 u.nu - alpha (rho+ - rho-)/2; alpha=None takes max |u.nu| on the face."""
    rho_m, rho_p = _interface_traces(disc, state, iface)
    un = vel.un_iface_minus[iface.axis, iface.cell_minus]
    if alpha is None:
        alpha = float(np.max(np.abs(un)))
    elif alpha < 0:
        raise ValueError("lax_friedrichs dissipation alpha must be >= 0")
    return 0.5 * (rho_p + rho_m) * un - 0.5 * alpha * (rho_p - rho_m)


def kinetic_flux(disc: Discretization, iface, state: DensityState,
                 vel: VelocityTables) -> np.ndarray:
    """f = rho- max(u-.nu, 0) + rho+ min(u+.nu, 0) with one-sided velocity traces."""
    rho_m, rho_p = _interface_traces(disc, state, iface)
    un_m = vel.un_iface_minus[iface.axis, iface.cell_minus]
    un_p = vel.un_iface_plus[iface.axis, iface.cell_minus]
    return rho_m * np.maximum(un_m, 0.0) + rho_p * np.minimum(un_p, 0.0)


_FLUXES = {"upwind": upwind_flux, "lax_friedrichs": lax_friedrichs_flux,
           "kinetic": kinetic_flux}


def interface_flux(disc: Discretization, iface, state: DensityState, vel: VelocityTables,
                   kind: str = "upwind", alpha: float | None = None) -> np.ndarray:
    if kind == "lax_friedrichs":
        return lax_friedrichs_flux(disc, iface, state, vel, alpha)
    try:
        return _FLUXES[kind](disc, iface, state, vel)
    except KeyError:
        raise ValueError(f"unknown flux kind {kind!r}") from None


def flux_vector(disc: Discretization, cell: int, state: DensityState, vel: VelocityTables,
                kind: str = "upwind", weighting: str = "plain",
                alpha: float | None = None) -> np.ndarray:
    """Boundary flux vector g_i = oint phi_i f over the cell's faces.

    With ``weighting='fisher_rao'`` the integrand is divided by the
    owning cell's own density trace, which must be positive there.
    """
    if weighting not in ("plain", "fisher_rao"):
        raise ValueError(f"unknown weighting {weighting!r}")
    g = np.zeros(disc.n_loc)
    mesh = disc.mesh
    for axis in range(disc.dim):
        for side, sign in ((1, 1.0), (0, -1.0)):
            # the interface on this face: cell is the minus side of its own
            # high face, and the plus side of its low-side neighbor's interface
            if side == 1:
                k = axis * disc.n_cells + cell
            else:
                k = axis * disc.n_cells + mesh.neighbor(cell, axis, 0)
            iface = mesh.interfaces[k]
            f = interface_flux(disc, iface, state, vel, kind, alpha)
            tr = disc.phi_face[2 * axis + side]
            w = disc.w_face_phys
            if weighting == "fisher_rao":
                rho_own = tr @ state.by_cell[cell]
                _require_positive(rho_own, cell, "face")
                w = w / rho_own
            # sign flips the interface flux to the cell's outward normal
            g += sign * np.einsum("j,ji->i", w * f, tr)
    return g
