# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RHS kernels: per-cell loops over the tabulated reference data.

Mirrors _kernels/python_ref.py; the wrapper in _kernels/compiled.py
translates the integer status codes into KernelPositivity exceptions.
Status: 0 ok, 1 non-positive density at a volume node, 2 at a face node,
3 mass block not SPD.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

ctypedef cnp.int64_t i64

FLUX_UPWIND = 0
FLUX_LAX_FRIEDRICHS = 1
FLUX_KINETIC = 2


cdef inline int _cholesky_solve(double[:, ::1] M, double* b, double* x, int n) nogil:
    """Solve M x = b for SPD M via in-place Cholesky; returns 0 on success."""
    cdef int i, j, k
    cdef double s
    for i in range(n):
        for j in range(i + 1):
            s = M[i, j]
            for k in range(j):
                s -= M[i, k] * M[j, k]
            if i == j:
                if s <= 0.0:
                    return 1
                M[i, i] = sqrt(s)
            else:
                M[i, j] = s / M[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= M[i, k] * x[k]
        x[i] = s / M[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= M[k, i] * x[k]
        x[i] = s / M[i, i]
    return 0


cdef int _dfrg_core(double[:, ::1] r2,
                    double[:, ::1] phi_vol, double[::1] w_vol,
                    double[:, :, ::1] uproj, double[:, ::1] divu,
                    double[:, :, ::1] trace_lo, double[:, :, ::1] trace_hi,
                    double[::1] w_face, i64[:, ::1] nb_hi,
                    double[:, :, ::1] un_minus,
                    double[:, ::1] out,
                    double[:, ::1] rho_v, double[:, ::1] b, double[:, ::1] mwork,
                    i64[::1] err_info, double[::1] err_val) nogil:
    cdef int nc = r2.shape[0]
    cdef int nloc = r2.shape[1]
    cdef int nqv = phi_vol.shape[0]
    cdef int nqf = w_face.shape[0]
    cdef int ndim = trace_lo.shape[0]
    cdef int c, q, i, j, axis, nb
    cdef double rho, adv, rm, rp, un, f, tm, tp, w
    cdef double bloc[64]
    cdef double xloc[64]

    # volume terms: b_i += sum_q w_q phi_i(q) [(Drho.u)/rho + div u](q)
    for c in range(nc):
        for i in range(nloc):
            b[c, i] = 0.0
        for q in range(nqv):
            rho = 0.0
            adv = 0.0
            for i in range(nloc):
                rho += r2[c, i] * phi_vol[q, i]
                adv += r2[c, i] * uproj[c, q, i]
            if rho <= 0.0:
                err_info[0] = c
                err_info[1] = 1
                err_info[2] = q
                err_val[0] = rho
                return 1
            rho_v[c, q] = rho
            adv = adv / rho + divu[c, q]
            w = w_vol[q] * adv
            for i in range(nloc):
                b[c, i] += w * phi_vol[q, i]

    # interface terms: upwind flux against both adjacent cells
    for axis in range(ndim):
        for c in range(nc):
            nb = <int> nb_hi[axis, c]
            for q in range(nqf):
                rm = 0.0
                rp = 0.0
                for i in range(nloc):
                    rm += r2[c, i] * trace_hi[axis, q, i]
                    rp += r2[nb, i] * trace_lo[axis, q, i]
                if rm <= 0.0:
                    err_info[0] = c
                    err_info[1] = 2
                    err_info[2] = q
                    err_val[0] = rm
                    return 2
                if rp <= 0.0:
                    err_info[0] = nb
                    err_info[1] = 2
                    err_info[2] = q
                    err_val[0] = rp
                    return 2
                un = un_minus[axis, c, q]
                if un > 0.0:
                    f = rm * un
                elif un < 0.0:
                    f = rp * un
                else:
                    f = 0.0
                tm = (f - rm * un) / rm * w_face[q]
                tp = (rp * un - f) / rp * w_face[q]
                for i in range(nloc):
                    b[c, i] += tm * trace_hi[axis, q, i]
                    b[nb, i] += tp * trace_lo[axis, q, i]

    # assemble and solve the Fisher-Rao mass block per cell
    for c in range(nc):
        for i in range(nloc):
            for j in range(nloc):
                mwork[i, j] = 0.0
        for q in range(nqv):
            w = w_vol[q] / rho_v[c, q]
            for i in range(nloc):
                for j in range(i + 1):
                    mwork[i, j] += w * phi_vol[q, i] * phi_vol[q, j]
        for i in range(nloc):
            bloc[i] = -b[c, i]
        if _cholesky_solve(mwork, bloc, xloc, nloc):
            err_info[0] = c
            err_info[1] = 1
            err_info[2] = -1
            err_val[0] = 0.0
            return 3
        for i in range(nloc):
            out[c, i] = xloc[i]
    return 0


cdef int _dg_core(double[:, ::1] r2,
                  double[:, :, ::1] k_blocks, double[:, ::1] m_chol,
                  double[:, :, ::1] trace_lo, double[:, :, ::1] trace_hi,
                  double[::1] w_face, i64[:, ::1] nb_hi,
                  double[:, :, ::1] un_minus, double[:, :, ::1] un_plus,
                  double[:, ::1] alpha, int flux_kind,
                  double[:, ::1] out, double[:, ::1] b) nogil:
    cdef int nc = r2.shape[0]
    cdef int nloc = r2.shape[1]
    cdef int nqf = w_face.shape[0]
    cdef int ndim = trace_lo.shape[0]
    cdef int c, q, i, j, k, axis, nb
    cdef double rm, rp, un, unp, f, s, fw
    cdef double bloc[64]
    cdef double xloc[64]

    for c in range(nc):
        for i in range(nloc):
            s = 0.0
            for j in range(nloc):
                s += k_blocks[c, i, j] * r2[c, j]
            b[c, i] = s

    for axis in range(ndim):
        for c in range(nc):
            nb = <int> nb_hi[axis, c]
            for q in range(nqf):
                rm = 0.0
                rp = 0.0
                for i in range(nloc):
                    rm += r2[c, i] * trace_hi[axis, q, i]
                    rp += r2[nb, i] * trace_lo[axis, q, i]
                un = un_minus[axis, c, q]
                if flux_kind == 0:
                    if un > 0.0:
                        f = rm * un
                    elif un < 0.0:
                        f = rp * un
                    else:
                        f = 0.0
                elif flux_kind == 1:
                    f = 0.5 * (rp + rm) * un - 0.5 * alpha[axis, c] * (rp - rm)
                else:
                    unp = un_plus[axis, c, q]
                    f = 0.0
                    if un > 0.0:
                        f += rm * un
                    if unp < 0.0:
                        f += rp * unp
                fw = f * w_face[q]
                for i in range(nloc):
                    b[c, i] += fw * trace_hi[axis, q, i]
                    b[nb, i] -= fw * trace_lo[axis, q, i]

    # shared prefactored mass block: L in the lower triangle of m_chol
    for c in range(nc):
        for i in range(nloc):
            s = -b[c, i]
            for k in range(i):
                s -= m_chol[i, k] * bloc[k]
            bloc[i] = s / m_chol[i, i]
        for i in range(nloc - 1, -1, -1):
            s = bloc[i]
            for k in range(i + 1, nloc):
                s -= m_chol[k, i] * xloc[k]
            xloc[i] = s / m_chol[i, i]
        for i in range(nloc):
            out[c, i] = xloc[i]
    return 0


def dfrg_rhs(double[:, ::1] r2,
             double[:, ::1] phi_vol, double[::1] w_vol,
             double[:, :, ::1] uproj, double[:, ::1] divu,
             double[:, :, ::1] trace_lo, double[:, :, ::1] trace_hi,
             double[::1] w_face, i64[:, ::1] nb_hi,
             double[:, :, ::1] un_minus,
             double[:, ::1] out,
             double[:, ::1] rho_v, double[:, ::1] b, double[:, ::1] mwork,
             i64[::1] err_info, double[::1] err_val):
    if r2.shape[1] > 64:
        raise ValueError("compiled kernel supports at most 64 local basis functions")
    cdef int status
    with nogil:
        status = _dfrg_core(r2, phi_vol, w_vol, uproj, divu, trace_lo, trace_hi,
                            w_face, nb_hi, un_minus, out, rho_v, b, mwork,
                            err_info, err_val)
    return status


def dg_rhs(double[:, ::1] r2,
           double[:, :, ::1] k_blocks, double[:, ::1] m_chol,
           double[:, :, ::1] trace_lo, double[:, :, ::1] trace_hi,
           double[::1] w_face, i64[:, ::1] nb_hi,
           double[:, :, ::1] un_minus, double[:, :, ::1] un_plus,
           double[:, ::1] alpha, int flux_kind,
           double[:, ::1] out, double[:, ::1] b):
    if r2.shape[1] > 64:
        raise ValueError("compiled kernel supports at most 64 local basis functions")
    cdef int status
    with nogil:
        status = _dg_core(r2, k_blocks, m_chol, trace_lo, trace_hi, w_face,
                          nb_hi, un_minus, un_plus, alpha, flux_kind, out, b)
    return status
