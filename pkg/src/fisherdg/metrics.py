"""Error measurement against the characteristic oracle.

All integrals use an over-integration Clenshaw-Curtis rule with
2 n_q + 1 points per axis so the error numbers are not biased by the
solver's own quadrature.  The generalized KL divergence between
unnormalized densities,

    KL(rho || sigma) = int rho log(rho/sigma) - int rho + int sigma,

is always evaluated with the exact density as the first argument; it is
+inf exactly when the numerical density is non-positive at one of the
measurement nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import DensityState, PositivityLost
from .basis import tensor_eval, tensor_index
from .operators import Discretization, error_rule
from .reference import CharacteristicTracer, ProblemSpec

CSV_HEADER = "t,L1,L2,KL,mass,min_density,limiter_activations"


@dataclass
class ErrorReport:
    """Errors and state diagnostics at one sample time."""

    t: float
    l1: float
    l2: float
    kl: float
    total_mass: float
    min_density: float
    limiter_activations: int = 0

    def csv_row(self) -> str:
        def fmt(v):
            return "inf" if math.isinf(v) else repr(float(v))
        return ",".join([fmt(self.t), fmt(self.l1), fmt(self.l2), fmt(self.kl),
                         fmt(self.total_mass), fmt(self.min_density),
                         str(self.limiter_activations)])


def generalized_kl(w: np.ndarray, rho: np.ndarray, sigma: np.ndarray) -> float:
    """Quadrature of the generalized KL divergence KL(rho || sigma)."""
    if np.any(sigma <= 0.0):
        return math.inf
    return float(np.dot(w, rho * np.log(rho / sigma) - rho + sigma))


# exact densities at the measurement nodes, keyed by (pid, dim, m, n_q) and
# sample time; identical sweeps (e.g. several schemes on one problem) share
# one backward-characteristic pass
_ORACLE_STORES: dict = {}


class ErrorEvaluator:
    """Caches the measurement rule tables and an oracle tracer for one run.

    Reports must be requested at non-decreasing times (the tracer walks
    backward characteristics incrementally); `error_norms` below covers
    the random-access case by building a fresh evaluator.
    """

    def __init__(self, disc: Discretization, problem: ProblemSpec, rule=None):
        self.disc = disc
        self.problem = problem
        if rule is None:
            rule = error_rule(disc.n_q)
            key = (problem.pid, disc.dim, disc.mesh.m, disc.n_q)
            self._store = _ORACLE_STORES.setdefault(key, {})
        else:
            self._store = {}
        dim = disc.dim
        if dim == 1:
            pts = rule.nodes[:, None]
            w = rule.weights.copy()
        else:
            a, b = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
            pts = np.stack([a.ravel(), b.ravel()], axis=1)
            w = np.outer(rule.weights, rule.weights).ravel()
        self.w_phys = w * disc.h ** dim
        n_e = len(pts)
        self.phi_err = np.empty((n_e, disc.n_loc))
        for i in range(disc.n_loc):
            mi = tensor_index(disc.basis, i, dim)
            for q in range(n_e):
                self.phi_err[q, i] = tensor_eval(disc.basis, mi, pts[q])
        phys = disc.cell_points(pts).reshape(-1, dim)
        self.tracer = CharacteristicTracer(problem, phys)
        self._cache_t = None
        self._cache_rho = None

    def exact_at(self, t: float) -> np.ndarray:
        if t in self._store:
            return self._store[t]
        if self._cache_t is None or t != self._cache_t:
            self.tracer.advance(t)
            self._cache_rho = self.tracer.density().reshape(self.disc.n_cells, -1)
            self._cache_t = t
        self._store[t] = self._cache_rho
        return self._cache_rho

    def report(self, state: DensityState, t: float, limiter_activations: int = 0) -> ErrorReport:
        rho_hat = state.eval_at_reference(self.phi_err)
        rho = self.exact_at(t)
        diff = rho_hat - rho
        w = self.w_phys
        l1 = float(np.sum(np.abs(diff) @ w))
        l2 = float(np.sqrt(np.sum((diff * diff) @ w)))
        kl = generalized_kl(np.tile(w, self.disc.n_cells),
                            rho.reshape(-1), rho_hat.reshape(-1))
        mass = float(np.sum(rho_hat @ w))
        return ErrorReport(t, l1, l2, kl, mass, float(rho_hat.min()), limiter_activations)

    def state_diagnostics(self, state: DensityState) -> tuple[float, float]:
        """(total mass, min density) at the measurement nodes; no oracle involved."""
        rho_hat = state.eval_at_reference(self.phi_err)
        return float(np.sum(rho_hat @ self.w_phys)), float(rho_hat.min())


def error_norms(state: DensityState, problem: ProblemSpec, t: float,
                limiter_activations: int = 0) -> ErrorReport:
    """One-off error report (builds a fresh oracle tracer; fine for tests)."""
    return ErrorEvaluator(state.disc, problem).report(state, t, limiter_activations)


@dataclass
class MeanErrors:
    l1: float
    l2: float
    kl: float
    n_samples: int


def mean_error_over_time(samples, problem: ProblemSpec,
                         evaluator: ErrorEvaluator | None = None) -> MeanErrors:
    """Arithmetic mean of the error norms over (t, DensityState) samples.

    The t = 0 sample is included.  A single +inf KL sample makes the mean
    KL +inf (it is propagated, never clipped).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("mean_error_over_time needs at least one sample")
    if evaluator is None:
        evaluator = ErrorEvaluator(samples[0][1].disc, problem)
    l1 = l2 = kl = 0.0
    for t, state in samples:
        rep = evaluator.report(state, t)
        l1 += rep.l1
        l2 += rep.l2
        kl += rep.kl
    n = len(samples)
    return MeanErrors(l1 / n, l2 / n, kl / n, n)


@dataclass
class ConvergenceRow:
    m: int
    h: float
    l1: float | None
    order_l1: float | None
    l2: float | None
    order_l2: float | None
    kl: float | None
    order_kl: float | None
    failure: str = ""

    def csv_row(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            return "inf" if math.isinf(v) else repr(float(v))
        return ",".join([str(self.m), repr(self.h), fmt(self.l1), fmt(self.order_l1),
                         fmt(self.l2), fmt(self.order_l2), fmt(self.kl),
                         fmt(self.order_kl), self.failure])


CONVERGENCE_HEADER = "m,h,mean_L1,order_L1,mean_L2,order_L2,mean_KL,order_KL,failure"


def _observed_order(coarse: float | None, fine: float | None, ratio: float) -> float | None:
    if coarse is None or fine is None:
        return None
    if not (math.isfinite(coarse) and math.isfinite(fine)) or coarse <= 0 or fine <= 0:
        return None
    return math.log(coarse / fine) / math.log(ratio)


def convergence_table(scheme, problem: ProblemSpec, m_list, **overrides) -> list[ConvergenceRow]:
    """Grid-refinement table for one scheme on one registered problem.

    Keyword overrides (p, cfl, n_q, t_final, sample_interval, backend,
    velocity_mode) replace the problem defaults for every resolution.
    """
    from .experiments import run_for_convergence  # deferred: experiments uses metrics

    def runner(m):
        return run_for_convergence(scheme, problem, m, **overrides)

    return build_table(runner, m_list)


def build_table(run_experiment, m_list) -> list[ConvergenceRow]:
    """Grid-refinement table; `run_experiment(m) -> (MeanErrors | None, note)`.

    m_list must be strictly increasing with power-of-two ratios.  The
    observed order between consecutive resolutions is
    log(e_coarse/e_fine) / log(m_fine/m_coarse); rows whose errors are
    missing or infinite leave their order cells empty.  Failures are
    recorded in-row and do not stop the sweep.
    """
    m_list = list(m_list)
    if any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise ValueError("m_list must be strictly increasing")
    for m in m_list[1:]:
        ratio = m / m_list[0]
        if 2 ** round(math.log2(ratio)) != ratio:
            raise ValueError(f"m={m} is not a power-of-two multiple of m={m_list[0]}")
    rows: list[ConvergenceRow] = []
    prev: MeanErrors | None = None
    prev_m = None
    for m in m_list:
        errors, note = run_experiment(m)
        if errors is None:
            rows.append(ConvergenceRow(m, 1.0 / m, None, None, None, None, None, None, note))
            prev, prev_m = None, None
            continue
        if prev is not None:
            ratio = m / prev_m
            o1 = _observed_order(prev.l1, errors.l1, ratio)
            o2 = _observed_order(prev.l2, errors.l2, ratio)
            ok = _observed_order(prev.kl, errors.kl, ratio)
        else:
            o1 = o2 = ok = None
        rows.append(ConvergenceRow(m, 1.0 / m, errors.l1, o1, errors.l2, o2,
                                   errors.kl, ok, note))
        prev, prev_m = errors, m
    return rows


# -- Fisher-Rao DG KL-growth diagnostic --------------------------------------


@dataclass
class KLGrowthResult:
    """Output of the KL-growth identity check.

    `expression_values[k]` evaluates, for probe k, the volume/face residual
    of the scheme tested against (rho_exact - probe)/rho_hat plus the
    upstream-jump interface terms; all probes must agree (the probe part
    cancels by Galerkin orthogonality) and the common value estimates
    d/dt KL(exact || numerical), cross-checked by `fd_dkl_dt`.
    """

    expression_values: list[float]
    fd_dkl_dt: float
    fd_delta: float
    mixed_sign_interfaces: int

    @property
    def spread(self) -> float:
        vals = self.expression_values
        scale = max(abs(v) for v in vals) or 1.0
        return (max(vals) - min(vals)) / scale


def kl_growth_diagnostic(state: DensityState, rdot: np.ndarray, problem: ProblemSpec,
                         t: float, probes, vel=None, fd_delta: float = 1e-3) -> KLGrowthResult:
    """Evaluate the KL-growth identity for a Fisher-Rao DG state.

    `probes` are coefficient vectors of test densities in the Galerkin
    space.  The identity's volume and face terms are evaluated with the
    solver's own quadrature so the probe-dependent part cancels through
    the discrete equations; interfaces where u . nu changes sign across
    the face are excluded from the jump term and counted.

    `rdot` must be the analytic-velocity Fisher-Rao derivative of the
    state (velocity_mode="analytic"): the exact density evolves along the
    analytic field, so a nodally interpolated velocity would shift the
    identity by the interpolation error.
    """
    disc = state.disc
    if t < fd_delta:
        raise ValueError("need t >= fd_delta for the centered difference")
    if vel is None:
        vel = problem.velocity.on(disc, "analytic")
    r2 = state.by_cell
    rdot2 = np.asarray(rdot, dtype=float).reshape(disc.n_cells, disc.n_loc)

    rho_v = r2 @ disc.phi_vol.T
    if rho_v.min() <= 0.0:
        c, q = divmod(int(np.argmin(rho_v)), disc.n_qv)
        raise PositivityLost(c, "volume", q, float(rho_v[c, q]), t)
    rhodot_v = rdot2 @ disc.phi_vol.T
    div_rho_u = np.einsum("ci,cqi->cq", r2, vel.uproj_vol) + rho_v * vel.divu_vol
    residual = (rhodot_v + div_rho_u) / rho_v

    vol_pts = disc.cell_points(disc.vol_points).reshape(-1, disc.dim)
    tr_vol = CharacteristicTracer(problem, vol_pts)
    tr_vol.advance(t)
    rho_exact_v = tr_vol.density().reshape(disc.n_cells, disc.n_qv)

    face_pts = np.concatenate([disc.face_phys_points(axis).reshape(-1, disc.dim)
                               for axis in range(disc.dim)])
    tr_face = CharacteristicTracer(problem, face_pts)
    tr_face.advance(t)
    rho_exact_f = tr_face.density().reshape(disc.dim, disc.n_cells, disc.n_qf)

    # state traces and upwind flux per interface
    trace_hi = disc.phi_face[1::2]
    trace_lo = disc.phi_face[0::2]
    mixed = 0
    values = []
    for probe in probes:
        s2 = np.asarray(probe, dtype=float).reshape(disc.n_cells, disc.n_loc)
        sig_v = s2 @ disc.phi_vol.T
        g_v = rho_exact_v - sig_v
        total = -np.einsum("q,cq,cq->", disc.w_vol_phys, g_v, residual)
        jump_total = 0.0
        mixed = 0
        for axis in range(disc.dim):
            nb = disc.nb_hi[axis]
            rho_m = r2 @ trace_hi[axis].T
            rho_p = r2[nb] @ trace_lo[axis].T
            sig_m = s2 @ trace_hi[axis].T
            sig_p = s2[nb] @ trace_lo[axis].T
            un = vel.un_iface_minus[axis]
            f = np.where(un > 0.0, rho_m * un, np.where(un < 0.0, rho_p * un, 0.0))
            rho_e = rho_exact_f[axis]
            g_m = rho_e - sig_m
            g_p = rho_e - sig_p
            total += np.einsum("q,cq->", disc.w_face_phys, g_m * (un - f / rho_m))
            total += np.einsum("q,cq->", disc.w_face_phys, g_p * (f / rho_p - un))
            # upstream-jump term over single-signed interfaces; the
            # integrand log(up/down) - up/down + 1 is <= 0 (upwind transfer
            # never increases the divergence) and vanishes for continuous
            # traces
            pos = np.all(un > 0.0, axis=1)
            neg = np.all(un < 0.0, axis=1)
            mixed += int(np.count_nonzero(~(pos | neg)))
            for mask, up, down in ((pos, rho_m, rho_p), (neg, rho_p, rho_m)):
                if not np.any(mask):
                    continue
                integrand = (np.log(up[mask] / down[mask])
                             - up[mask] / down[mask] + 1.0) * rho_e[mask] * np.abs(un[mask])
                jump_total += float(np.einsum("q,cq->", disc.w_face_phys, integrand))
        values.append(float(total + jump_total))

    # centered finite difference of KL(exact || numerical) along the trajectory
    evaluator = ErrorEvaluator(disc, problem)
    w_err = np.tile(evaluator.w_phys, disc.n_cells)
    kl_pm = []
    for sgn in (-1.0, 1.0):
        coeffs = state.coeffs + sgn * fd_delta * np.asarray(rdot, dtype=float)
        rho_hat = DensityState(disc, coeffs).eval_at_reference(evaluator.phi_err)
        tr = CharacteristicTracer(problem, disc.cell_points(
            error_points(disc)).reshape(-1, disc.dim))
        tr.advance(t + sgn * fd_delta)
        kl_pm.append(generalized_kl(w_err, tr.density(), rho_hat.reshape(-1)))
    fd = (kl_pm[1] - kl_pm[0]) / (2.0 * fd_delta)
    return KLGrowthResult(values, fd, fd_delta, mixed)


def error_points(disc: Discretization) -> np.ndarray:
    """Reference points of the over-integration measurement rule."""
    rule = error_rule(disc.n_q)
    if disc.dim == 1:
        return rule.nodes[:, None]
    a, b = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1)
