"""Wrapper around the Cython kernels: allocates workspaces and maps
status codes onto KernelPositivity exceptions."""

from __future__ import annotations

import numpy as np

from . import KernelPositivity
from . import _speedup

name = "compiled"

_KINDS = {1: "volume", 2: "face"}


def _raise(status: int, info: np.ndarray, val: np.ndarray):
    if status == 3:
        raise ArithmeticError(f"Fisher-Rao mass block of cell {info[0]} is not SPD")
    raise KernelPositivity(int(info[0]), _KINDS[int(info[1])], int(info[2]), float(val[0]))


def dfrg_rhs(plan, r2: np.ndarray) -> np.ndarray:
    r2 = np.ascontiguousarray(r2)
    out = np.empty_like(r2)
    rho_v = np.empty((plan.n_cells, plan.n_qv))
    b = np.empty((plan.n_cells, plan.n_loc))
    mwork = np.empty((plan.n_loc, plan.n_loc))
    info = np.zeros(3, dtype=np.int64)
    val = np.zeros(1)
    status = _speedup.dfrg_rhs(r2, plan.phi_vol, plan.w_vol_phys, plan.uproj_vol,
                               plan.divu_vol, plan.trace_lo, plan.trace_hi,
                               plan.w_face_phys, plan.nb_hi, plan.un_minus,
                               out, rho_v, b, mwork, info, val)
    if status:
        _raise(status, info, val)
    return out


def dg_rhs(plan, r2: np.ndarray) -> np.ndarray:
    r2 = np.ascontiguousarray(r2)
    out = np.empty_like(r2)
    b = np.empty((plan.n_cells, plan.n_loc))
    status = _speedup.dg_rhs(r2, plan.k_blocks, plan.m_chol, plan.trace_lo,
                             plan.trace_hi, plan.w_face_phys, plan.nb_hi,
                             plan.un_minus, plan.un_plus, plan.alpha,
                             plan.flux_kind, out, b)
    if status:
        raise ArithmeticError("dg kernel failed")
    return out
