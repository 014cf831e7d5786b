"""Explicit SSPRK3 stepping with CFL-derived step size and exact sample landing.

The step size is ``dt = CFL * h / u_max`` with ``u_max`` the maximum of
|u| (1D) or |u_x|+|u_y| (2D) over the basis nodes.  Every sample time
``k * sample_interval`` and the final time are hit exactly: each sample
interval is subdivided into equal steps no longer than the CFL step, so
reported states never involve interpolation in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import DensityState, PositivityLost
from .semidiscrete import SemidiscreteOperator, limit_positivity

LIMITER_MODES = ("off", "per_stage", "per_step")


@dataclass(frozen=True)
class TimeConfig:
    cfl: float
    t_final: float
    sample_interval: float
    limiter_mode: str = "auto"  # resolved per scheme: dg_plus -> per_stage, else off
    limiter_eps: float = 1e-15

    def __post_init__(self):
        if self.cfl <= 0:
            raise ValueError("cfl must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be >= 0")
        if self.sample_interval <= 0:
            raise ValueError("sample_interval must be positive")
        if self.limiter_mode not in LIMITER_MODES + ("auto",):
            raise ValueError(f"unknown limiter_mode {self.limiter_mode!r}")

    def resolve_limiter(self, scheme_kind: str) -> str:
        if self.limiter_mode != "auto":
            if scheme_kind != "dg_plus" and self.limiter_mode != "off":
                raise ValueError("the positivity limiter is only available with the dg_plus scheme")
            if scheme_kind == "dg_plus" and self.limiter_mode == "off":
                raise ValueError("dg_plus requires a limiter mode (per_stage or per_step)")
            return self.limiter_mode

        return "per_stage" if scheme_kind == "dg_plus" else "off"


@dataclass
class Event:
    kind: str  # 'limiter' or 'positivity_lost'
    t: float
    stage: int | None = None
    cells: int = 0
    detail: str = ""


@dataclass
class IntegrationResult:
    times: list[float]
    states: list[np.ndarray]  # coefficient vectors at the sample times
    events: list[Event] = field(default_factory=list)
    completed: bool = True
    failure: PositivityLost | None = None
    dt_base: float = 0.0
    n_steps: int = 0

    def state(self, disc, k: int) -> DensityState:
        return DensityState(disc, self.states[k].copy())

    def final_state(self, disc) -> DensityState:
        return self.state(disc, len(self.states) - 1)

    def limiter_counts_per_sample(self) -> list[int]:
        """Limiter activations (limited cells summed over stages) per sample interval."""
        counts = [0] * len(self.times)
        edges = self.times
        j = 1
        for ev in self.events:
            if ev.kind != "limiter":
                continue
            while j < len(edges) and ev.t > edges[j] + 1e-14:
                j += 1
            counts[min(j, len(counts) - 1)] += ev.cells
        return counts


def ssprk3_step(rhs, r: np.ndarray, t: float, dt: float, limiter=None) -> np.ndarray:
    """One Shu-Osher SSPRK3 step; `limiter` is applied after each stage if given.

    Stages (forward-Euler convex combinations):
        u1 = u + dt L(u, t)
        u2 = 3/4 u + 1/4 (u1 + dt L(u1, t + dt))
        u+ = 1/3 u + 2/3 (u2 + dt L(u2, t + dt/2))
    """
    def L(u, tt, stage_no):
        try:
            return rhs(u, tt)
        except PositivityLost as exc:
            t_fail = exc.t if exc.t is not None else tt
            raise exc.with_context(t_fail, stage_no) from None

    def stage(expr, stage_no):
        return limiter(expr, t, stage_no) if limiter is not None else expr

    u1 = stage(r + dt * L(r, t, 1), 1)
    u2 = stage(0.75 * r + 0.25 * (u1 + dt * L(u1, t + dt, 2)), 2)
    return stage(r / 3.0 + (2.0 / 3.0) * (u2 + dt * L(u2, t + 0.5 * dt, 3)), 3)


def sample_times(t_final: float, sample_interval: float) -> list[float]:
    if t_final == 0.0:
        return [0.0]
    n = int(math.floor(t_final / sample_interval + 1e-9))
    times = [k * sample_interval for k in range(n + 1)]
    if times[-1] < t_final - 1e-12 * max(1.0, t_final):
        times.append(t_final)
    else:
        times[-1] = t_final
    return times


def integrate(op: SemidiscreteOperator, r0: DensityState, tc: TimeConfig) -> IntegrationResult:
    """Integrate the semidiscrete system, sampling states at the configured times.

    A PositivityLost failure stops the run and is recorded as an event;
    the partial trajectory up to the last completed sample is returned.
    """
    disc = op.disc
    mode = tc.resolve_limiter(op.scheme.kind)
    dt_base = tc.cfl * disc.h / op.u_max
    times = sample_times(tc.t_final, tc.sample_interval)
    result = IntegrationResult(times=[0.0], states=[r0.coeffs.copy()], dt_base=dt_base)

    def stage_limiter(coeffs, t, stage_no):
        r2, n = limit_positivity(disc, coeffs.reshape(disc.n_cells, disc.n_loc),
                                 tc.limiter_eps)
        if n:
            result.events.append(Event("limiter", t, stage_no, n))
        return r2.reshape(-1)

    per_stage = stage_limiter if mode == "per_stage" else None
    r = r0.coeffs.copy()
    for ta, tb in zip(times[:-1], times[1:]):
        span = tb - ta
        n_sub = max(1, math.ceil(span / dt_base - 1e-9))
        dt = span / n_sub
        for k in range(n_sub):
            t = ta + k * dt
            try:
                r = ssprk3_step(op, r, t, dt, limiter=per_stage)
            except PositivityLost as exc:
                failure = exc if exc.t is not None else exc.with_context(t)
                t_fail = failure.t if failure.t is not None else t
                result.events.append(Event("positivity_lost", t_fail,
                                           failure.stage, 1, str(failure)))
                result.completed = False
                result.failure = failure
                return result
            if mode == "per_step":
                r = stage_limiter(r, t + dt, None)
            result.n_steps += 1
        result.times.append(tb)
        result.states.append(r.copy())
    return result
