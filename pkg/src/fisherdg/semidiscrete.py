"""Semidiscrete right-hand sides for the DG and Fisher-Rao DG schemes,
plus the mean-scaling positivity limiter used by the limited-DG baseline.

The coefficient ODE is ``M rdot = -(K r + g)`` per cell (see
:mod:`fisherdg.assembly` for the block conventions).  Both schemes share
one evaluation plan consumed by the selected kernel backend; the
Fisher-Rao scheme rebuilds and refactorizes its density-weighted mass
blocks at every evaluation, and applies the stiffness and flux terms in
matrix-free form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor

from . import _kernels
from ._kernels import KernelPositivity
from .assembly import DensityState, PositivityLost, VelocityField, mass_block
from .operators import Discretization, VelocityTables

SCHEME_KINDS = ("dg", "dg_plus", "dfrg")
FLUX_KINDS = ("upwind", "lax_friedrichs", "kinetic")
_FLUX_CODE = {"upwind": 0, "lax_friedrichs": 1, "kinetic": 2}


@dataclass(frozen=True)
class Scheme:
    """Scheme selector: plain DG, DG with the positivity limiter, or Fisher-Rao DG.

    The Fisher-Rao scheme is tied to the upwind flux; other fluxes are
    rejected here rather than producing an unsupported discretization.
    """

    kind: str = "dfrg"
    flux: str = "upwind"
    alpha: float | None = None  # Lax-Friedrichs dissipation; None = local max |u.nu|

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}; expected one of {SCHEME_KINDS}")
        if self.flux not in FLUX_KINDS:
            raise ValueError(f"unknown flux {self.flux!r}; expected one of {FLUX_KINDS}")
        if self.kind == "dfrg" and self.flux != "upwind":
            raise ValueError("the Fisher-Rao DG scheme requires the upwind flux")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("lax_friedrichs alpha must be >= 0")

    @property
    def limited(self) -> bool:
        return self.kind == "dg_plus"


@dataclass
class RhsPlan:
    """Everything a kernel backend needs, tabulated once per run."""

    scheme: str
    flux_kind: int
    dim: int
    n_cells: int
    n_loc: int
    n_qv: int
    n_qf: int
    phi_vol: np.ndarray
    w_vol_phys: np.ndarray
    trace_lo: np.ndarray
    trace_hi: np.ndarray
    w_face_phys: np.ndarray
    nb_hi: np.ndarray
    uproj_vol: np.ndarray
    divu_vol: np.ndarray
    un_minus: np.ndarray
    un_plus: np.ndarray
    alpha: np.ndarray
    k_blocks: np.ndarray | None = None
    m_chol: np.ndarray | None = None


def build_plan(disc: Discretization, vel: VelocityTables, scheme: Scheme) -> RhsPlan:
    dim = disc.dim
    trace_lo = np.ascontiguousarray(disc.phi_face[0::2])
    trace_hi = np.ascontiguousarray(disc.phi_face[1::2])
    if scheme.alpha is not None:
        alpha = np.full((dim, disc.n_cells), float(scheme.alpha))
    else:
        alpha = np.max(np.abs(vel.un_iface_minus), axis=2)
    plan = RhsPlan(
        scheme=scheme.kind,
        flux_kind=_FLUX_CODE[scheme.flux],
        dim=dim,
        n_cells=disc.n_cells,
        n_loc=disc.n_loc,
        n_qv=disc.n_qv,
        n_qf=disc.n_qf,
        phi_vol=np.ascontiguousarray(disc.phi_vol),
        w_vol_phys=np.ascontiguousarray(disc.w_vol_phys),
        trace_lo=trace_lo,
        trace_hi=trace_hi,
        w_face_phys=np.ascontiguousarray(disc.w_face_phys),
        nb_hi=np.ascontiguousarray(disc.nb_hi),
        uproj_vol=np.ascontiguousarray(vel.uproj_vol),
        divu_vol=np.ascontiguousarray(vel.divu_vol),
        un_minus=np.ascontiguousarray(vel.un_iface_minus),
        un_plus=np.ascontiguousarray(vel.un_iface_plus),
        alpha=np.ascontiguousarray(alpha),
    )
    if scheme.kind in ("dg", "dg_plus"):
        plan.k_blocks = -np.einsum("q,qid,qj,cqd->cij", disc.w_vol_phys,
                                   disc.dphi_vol_phys, disc.phi_vol, vel.u_vol)
        m_phys = mass_block(disc, 0)
        try:
            plan.m_chol = np.ascontiguousarray(cho_factor(m_phys, lower=True)[0])
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"singular mass block: {exc}") from exc
    return plan


class SemidiscreteOperator:
    """Callable rhs(coeffs, t) -> time derivative of the coefficient vector."""

    def __init__(self, disc: Discretization, velocity: VelocityField,
                 scheme: Scheme, velocity_mode: str = "nodal",
                 backend: str | None = None):
        self.disc = disc
        self.scheme = scheme
        self.velocity = velocity
        self.vel = velocity.on(disc, velocity_mode)
        self.velocity_mode = velocity_mode
        self.backend = _kernels.get_backend(backend)
        self.plan = build_plan(disc, self.vel, scheme)

    @property
    def backend_name(self) -> str:
        return self.backend.name

    @property
    def u_max(self) -> float:
        return self.vel.u_max

    def __call__(self, coeffs: np.ndarray, t: float = 0.0) -> np.ndarray:
        r2 = coeffs.reshape(self.disc.n_cells, self.disc.n_loc)
        try:
            if self.scheme.kind == "dfrg":
                out = self.backend.dfrg_rhs(self.plan, r2)
            else:
                out = self.backend.dg_rhs(self.plan, r2)
        except KernelPositivity as exc:
            raise PositivityLost(exc.cell, exc.node_kind, exc.node, exc.value, t) from None
        return out.reshape(-1)


def dg_rhs(state: DensityState, velocity: VelocityField, t: float = 0.0,
           flux: str = "upwind", alpha: float | None = None,
           velocity_mode: str = "nodal", backend: str | None = None) -> np.ndarray:
    """Plain-DG coefficient derivative (negative densities are tolerated)."""
    op = SemidiscreteOperator(state.disc, velocity, Scheme("dg", flux, alpha),
                              velocity_mode, backend)
    return op(state.coeffs, t)


def dfrg_rhs(state: DensityState, velocity: VelocityField, t: float = 0.0,
             velocity_mode: str = "nodal", backend: str | None = None) -> np.ndarray:
    """Fisher-Rao DG coefficient derivative; raises PositivityLost when the
    density is not strictly positive at a volume or face quadrature node."""
    op = SemidiscreteOperator(state.disc, velocity, Scheme("dfrg"),
                              velocity_mode, backend)
    return op(state.coeffs, t)


# -- positivity limiter ----------------------------------------------------


def limit_positivity(disc: Discretization, coeffs2: np.ndarray,
                     eps: float = 1e-15) -> tuple[np.ndarray, int]:
    """Mean-scaling limiter on the coefficient matrix; returns (new, n_cells_limited).

    Per cell: the minimum is taken over basis nodes and volume quadrature
    nodes.  If it is negative and the cell mean is positive, nodal values
    are pulled toward the mean just enough to reach eps; if the mean
    itself is non-positive the whole cell is set to eps (this drops mass
    on purpose: there is no mean-preserving positive rescaling).
    """
    rho_v = coeffs2 @ disc.phi_vol.T
    mins = np.minimum(coeffs2.min(axis=1), rho_v.min(axis=1))
    means = rho_v @ disc.w_vol
    scale_mask = (mins < 0.0) & (means > 0.0)
    floor_mask = means <= 0.0
    n_limited = int(np.count_nonzero(scale_mask) + np.count_nonzero(floor_mask))
    if n_limited == 0:
        return coeffs2, 0
    out = coeffs2.copy()
    if np.any(scale_mask):
        mu = means[scale_mask, None]
        theta = np.minimum(1.0, (mu - eps) / (mu - mins[scale_mask, None]))
        # the affine pull lands on eps only in exact arithmetic; for cells
        # whose mean dwarfs eps the rounded result can be 0 or slightly
        # negative, so the floor is enforced explicitly
        out[scale_mask] = np.maximum(mu + theta * (out[scale_mask] - mu), eps)
    if np.any(floor_mask):
        out[floor_mask] = eps
    return out, n_limited


def apply_positivity_limiter(state: DensityState, eps: float = 1e-15) -> DensityState:
    """Limited copy of the state (unchanged object is returned when nothing triggers)."""
    out, n = limit_positivity(state.disc, state.by_cell, eps)
    if n == 0:
        return state
    return DensityState(state.disc, out.reshape(-1))
