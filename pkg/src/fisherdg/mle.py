"""Per-cell maximum-likelihood projection oracle.

For one 1D cell with strictly positive velocity, a single advection step
of size dt moves particle positions by dt*u(x).  The best Galerkin
representation of the advected cell density, in the likelihood sense and
subject to the flux-balanced cell mass, solves a small KKT system: the
log-likelihood of the shifted in-cell density over the positions that
stay in the cell, plus the upstream neighbor's density over the
positions that enter, with one multiplier tying the new cell mass to
(old mass - outflow + inflow).

The finite-difference quotient (r_hat(dt) - r)/dt of these KKT solutions
converges, at first order in dt, to the cell block of the Fisher-Rao DG
right-hand side.  This module is the independent side of that check: it
evaluates the cell polynomials through its own product-formula Lagrange
code and integrates with scipy's adaptive quadrature, never through the
solver's assembly or Clenshaw-Curtis tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .assembly import DensityState, VelocityField
from .operators import Discretization
from .semidiscrete import dfrg_rhs

_QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


class NewtonError(RuntimeError):
    pass


def _lagrange_nodes(p: int) -> np.ndarray:
    return np.array([0.5]) if p == 0 else np.linspace(0.0, 1.0, p + 1)


def _lagrange_value(nodes: np.ndarray, i: int, x):
    """Direct product formula, independent of the solver's basis module."""
    out = np.ones_like(np.asarray(x, dtype=float))
    for k, xk in enumerate(nodes):
        if k != i:
            out = out * (x - xk) / (nodes[i] - xk)
    return out


def _poly(nodes: np.ndarray, coeffs: np.ndarray, origin: float, h: float):
    def f(x):
        local = (np.asarray(x, dtype=float) - origin) / h
        return sum(c * _lagrange_value(nodes, i, local) for i, c in enumerate(coeffs))
    return f


@dataclass(frozen=True)
class AdvectedRegions:
    """Sub-intervals of one cell classified by where dt*u sends them.

    stay = [a, x_exit]: positions still inside the cell after the step;
    leave = (x_exit, b]: positions pushed past the right face;
    enter = [x_entry, a): upstream positions (periodic preimage) pushed in.
    """

    cell: int
    a: float
    b: float
    x_exit: float
    x_entry: float

    @property
    def stay(self) -> tuple[float, float]:
        return (self.a, self.x_exit)

    @property
    def leave(self) -> tuple[float, float]:
        return (self.x_exit, self.b)

    @property
    def enter(self) -> tuple[float, float]:
        return (self.x_entry, self.a)


def advected_regions(disc: Discretization, cell: int, velocity: VelocityField,
                     dt: float) -> AdvectedRegions:
    """Root-find the region boundaries x + dt u(x) = a, b to 1e-12."""
    if disc.dim != 1:
        raise ValueError("the MLE oracle is one-dimensional")
    h = disc.h
    a = cell * h
    b = a + h

    def u(x):
        return float(velocity(np.array([[x % 1.0]]))[0, 0])

    lo = min(u(x) for x in np.linspace(a - h, b, 101))
    if lo <= 0.0:
        raise ValueError("the MLE oracle requires u > 0 on the cell and its upstream neighbor")
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt * max(u(x) for x in np.linspace(a - h, b, 101)) >= h:
        raise ValueError(f"dt={dt} too large: a particle would cross more than one cell")
    if dt == 0.0:
        return AdvectedRegions(cell, a, b, b, a)
    x_exit = brentq(lambda x: x + dt * u(x) - b, a, b, xtol=1e-14, rtol=8.9e-16)
    x_entry = brentq(lambda x: x + dt * u(x) - a, a - h, a, xtol=1e-14, rtol=8.9e-16)
    return AdvectedRegions(cell, a, b, float(x_exit), float(x_entry))


@dataclass
class KKTState:
    coeffs: np.ndarray       # candidate cell coefficients r_hat
    multiplier: float        # mass-constraint multiplier (1 at dt = 0)
    iterations: int
    residual: float


class CellMLE:
    """KKT system for the advected-likelihood projection on one cell."""

    def __init__(self, disc: Discretization, state: DensityState, cell: int,
                 velocity: VelocityField, dt: float):
        self.disc = disc
        self.cell = cell
        self.dt = dt
        self.h = disc.h
        self.nodes = _lagrange_nodes(disc.basis.order)
        self.n = len(self.nodes)
        self.regions = advected_regions(disc, cell, velocity, dt)
        a = self.regions.a
        self.a = a
        r2 = state.by_cell
        upstream = disc.mesh.neighbor(cell, 0, 0)
        self.rho_cell = _poly(self.nodes, r2[cell], a, self.h)
        # upstream polynomial parameterized on the unwrapped interval [a-h, a]
        self.rho_up = _poly(self.nodes, r2[upstream], a - self.h, self.h)
        self.r = r2[cell].copy()

        def u(x):
            return float(velocity(np.array([[x % 1.0]]))[0, 0])

        self.shift = lambda x: x + dt * u(x)
        # int_cell phi_k dx for the constraint row
        self.phi_mass = np.array([
            quad(lambda x: _lagrange_value(self.nodes, k, x), 0.0, 1.0, **_QUAD_OPTS)[0]
            for k in range(self.n)]) * self.h
        self.mass_target = (float(self.r @ self.phi_mass)
                            - self._quad(self.rho_cell, self.regions.leave)
                            + self._quad(self.rho_up, self.regions.enter))

    @staticmethod
    def _quad(f, interval) -> float:
        lo, hi = interval
        if hi <= lo:
            return 0.0
        return quad(f, lo, hi, **_QUAD_OPTS)[0]

    def _phi_at_shift(self, k: int):
        nodes, a, h = self.nodes, self.a, self.h
        return lambda x: _lagrange_value(nodes, k, (self.shift(x) - a) / h)

    def candidate(self, coeffs: np.ndarray):
        return _poly(self.nodes, coeffs, self.a, self.h)

    def feasible(self, coeffs: np.ndarray) -> bool:
        xs = np.linspace(0.0, 1.0, 201)
        vals = sum(c * _lagrange_value(self.nodes, i, xs) for i, c in enumerate(coeffs))
        return bool(np.min(vals) > 0.0)

    def residual(self, coeffs: np.ndarray, lam: float) -> np.ndarray:
        rho_new = self.candidate(coeffs)
        out = np.empty(self.n + 1)
        for k in range(self.n):
            phi_k = self._phi_at_shift(k)
            stay = self._quad(lambda x: phi_k(x) * self.rho_cell(x) / rho_new(self.shift(x)),
                              self.regions.stay)
            enter = self._quad(lambda x: phi_k(x) * self.rho_up(x) / rho_new(self.shift(x)),
                               self.regions.enter)
            out[k] = stay + enter - lam * self.phi_mass[k]
        out[self.n] = self.mass_target - float(coeffs @ self.phi_mass)
        return out

    def jacobian(self, coeffs: np.ndarray, lam: float) -> np.ndarray:
        rho_new = self.candidate(coeffs)
        J = np.zeros((self.n + 1, self.n + 1))
        for k in range(self.n):
            phi_k = self._phi_at_shift(k)
            for l in range(self.n):
                phi_l = self._phi_at_shift(l)
                stay = self._quad(
                    lambda x: phi_k(x) * phi_l(x) * self.rho_cell(x) / rho_new(self.shift(x)) ** 2,
                    self.regions.stay)
                enter = self._quad(
                    lambda x: phi_k(x) * phi_l(x) * self.rho_up(x) / rho_new(self.shift(x)) ** 2,
                    self.regions.enter)
                J[k, l] = -(stay + enter)
            J[k, self.n] = -self.phi_mass[k]
            J[self.n, k] = -self.phi_mass[k]
        return J

    def solve(self, tol: float = 1e-12, max_iter: int = 50) -> KKTState:
        """Damped Newton from (r, 1); the line search never accepts a residual increase."""
        coeffs = self.r.copy()
        lam = 1.0
        res = self.residual(coeffs, lam)
        norm = float(np.max(np.abs(res)))
        for it in range(max_iter):
            if norm <= tol:
                return KKTState(coeffs, lam, it, norm)
            J = self.jacobian(coeffs, lam)
            step = np.linalg.solve(J, -res)
            damping = 1.0
            while damping > 2.0 ** -30:
                cand = coeffs + damping * step[:self.n]
                cand_lam = lam + damping * step[self.n]
                if self.feasible(cand):
                    cand_res = self.residual(cand, cand_lam)
                    cand_norm = float(np.max(np.abs(cand_res)))
                    if cand_norm < norm:
                        coeffs, lam, res, norm = cand, cand_lam, cand_res, cand_norm
                        break
                damping *= 0.5
            else:
                raise NewtonError(f"line search stalled at iteration {it} (residual {norm:.3e})")
        if norm <= tol:
            return KKTState(coeffs, lam, max_iter, norm)
        raise NewtonError(f"no convergence in {max_iter} iterations (residual {norm:.3e})")


def mle_step_cell(disc: Discretization, state: DensityState, cell: int,
                  velocity: VelocityField, dt: float, tol: float = 1e-12) -> KKTState:
    """Solve the cell's maximum-likelihood step for one dt."""
    return CellMLE(disc, state, cell, velocity, dt).solve(tol=tol)


@dataclass
class ConsistencyResult:
    cell: int
    dts: list[float]
    discrepancies: list[float]
    slope: float
    rhs_inf_norm: float

    def csv_rows(self) -> list[str]:
        return [f"{repr(d)},{repr(e)}" for d, e in zip(self.dts, self.discrepancies)]


CONSISTENCY_HEADER = "delta_t,discrepancy"


def consistency_check(disc: Discretization, state: DensityState, cell: int,
                      velocity: VelocityField, dt_list) -> ConsistencyResult:
    """Compare (r_hat(dt) - r)/dt against the Fisher-Rao DG cell derivative.

    The solver side is evaluated with analytic velocity sampling so both
    sides discretize the same field; the discrepancy should shrink at
    first order in dt.  The fitted slope comes from a least-squares line
    through (log dt, log discrepancy).
    """
    dt_list = sorted(float(d) for d in dt_list)[::-1]
    rdot = dfrg_rhs(state, velocity, velocity_mode="analytic")
    rdot_cell = rdot.reshape(disc.n_cells, disc.n_loc)[cell]
    discrepancies = []
    for dt in dt_list:
        kkt = mle_step_cell(disc, state, cell, velocity, dt)
        quotient = (kkt.coeffs - state.by_cell[cell]) / dt
        discrepancies.append(float(np.max(np.abs(quotient - rdot_cell))))
    logs = np.log(np.array(dt_list))
    vals = np.log(np.maximum(np.array(discrepancies), 1e-300))
    slope = float(np.polyfit(logs, vals, 1)[0])
    return ConsistencyResult(cell, list(dt_list), discrepancies, slope,
                             float(np.max(np.abs(rdot_cell))))
