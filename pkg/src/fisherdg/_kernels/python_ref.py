"""Vectorized numpy implementation of the semidiscrete RHS kernels.

This is the reference backend: the compiled extension must agree with it
(see tests).  Arrays come from an :class:`~fisherdg.semidiscrete.RhsPlan`;
`r2` is the coefficient matrix (n_cells, n_loc).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve

from . import KernelPositivity

name = "python"

FLUX_UPWIND, FLUX_LAX_FRIEDRICHS, FLUX_KINETIC = 0, 1, 2


def _interface_flux(plan, axis, rho_m, rho_p):
    un = plan.un_minus[axis]
    if plan.flux_kind == FLUX_UPWIND:
        return np.where(un > 0.0, rho_m * un, np.where(un < 0.0, rho_p * un, 0.0))
    if plan.flux_kind == FLUX_LAX_FRIEDRICHS:
        alpha = plan.alpha[axis][:, None]
        return 0.5 * (rho_p + rho_m) * un - 0.5 * alpha * (rho_p - rho_m)
    un_p = plan.un_plus[axis]
    return rho_m * np.maximum(un, 0.0) + rho_p * np.minimum(un_p, 0.0)


def _raise_nonpositive(vals2: np.ndarray, cells: np.ndarray, kind: str):
    flat = int(np.argmin(vals2))
    c, node = divmod(flat, vals2.shape[1])
    raise KernelPositivity(int(cells[c]), kind, node, float(vals2[c, node]))


def dg_rhs(plan, r2: np.ndarray) -> np.ndarray:
    b = np.einsum("cij,cj->ci", plan.k_blocks, r2)
    for axis in range(plan.dim):
        rho_m = r2 @ plan.trace_hi[axis].T
        nb = plan.nb_hi[axis]
        rho_p = r2[nb] @ plan.trace_lo[axis].T
        f = _interface_flux(plan, axis, rho_m, rho_p)
        fw = f * plan.w_face_phys
        b += fw @ plan.trace_hi[axis]
        b[nb] -= fw @ plan.trace_lo[axis]
    return -cho_solve((plan.m_chol, True), b.T).T


def dfrg_rhs(plan, r2: np.ndarray) -> np.ndarray:
    rho_v = r2 @ plan.phi_vol.T
    if rho_v.min() <= 0.0:
        _raise_nonpositive(rho_v, np.arange(plan.n_cells), "volume")
    drho_u = np.einsum("ci,cqi->cq", r2, plan.uproj_vol)
    adv = drho_u / rho_v + plan.divu_vol
    b = (adv * plan.w_vol_phys) @ plan.phi_vol
    for axis in range(plan.dim):
        rho_m = r2 @ plan.trace_hi[axis].T
        if rho_m.min() <= 0.0:
            _raise_nonpositive(rho_m, np.arange(plan.n_cells), "face")
        nb = plan.nb_hi[axis]
        rho_p = r2[nb] @ plan.trace_lo[axis].T
        if rho_p.min() <= 0.0:
            _raise_nonpositive(rho_p, nb, "face")
        un = plan.un_minus[axis]
        f = np.where(un > 0.0, rho_m * un, np.where(un < 0.0, rho_p * un, 0.0))
        b += ((f - rho_m * un) / rho_m * plan.w_face_phys) @ plan.trace_hi[axis]
        b[nb] += ((rho_p * un - f) / rho_p * plan.w_face_phys) @ plan.trace_lo[axis]
    weights = plan.w_vol_phys / rho_v
    mass = np.einsum("cq,qi,qj->cij", weights, plan.phi_vol, plan.phi_vol)
    return -np.linalg.solve(mass, b[..., None])[..., 0]
