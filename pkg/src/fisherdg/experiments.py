"""High-level experiment driver shared by the CLI, the convergence tables,
and the acceptance suite: resolve a problem + scheme into a discretization,
integrate it, and evaluate the error reports along the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field


from .assembly import DensityState
from .basis import BasisSpec
from .mesh import MeshSpec, build_mesh
from .metrics import ErrorEvaluator, ErrorReport, MeanErrors
from .operators import Discretization
from .reference import ProblemSpec
from .semidiscrete import Scheme, SemidiscreteOperator
from .timestepping import IntegrationResult, TimeConfig, integrate


@dataclass
class RunSetup:
    problem: ProblemSpec
    scheme: Scheme
    disc: Discretization
    op: SemidiscreteOperator
    r0: DensityState
    time_config: TimeConfig

    @property
    def n_q(self) -> int:
        return self.disc.n_q


@dataclass
class RunResult:
    setup: RunSetup
    integration: IntegrationResult
    reports: list[ErrorReport] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.integration.completed

    def states(self):
        disc = self.setup.disc
        for t, coeffs in zip(self.integration.times, self.integration.states):
            yield t, DensityState(disc, coeffs)


def make_scheme(name: str, flux: str = "upwind", alpha: float | None = None) -> Scheme:
    return Scheme(name, flux, alpha)


def build_setup(problem: ProblemSpec, scheme: Scheme | str, *,
                p: int | None = None, m: int | None = None,
                n_q: int | None = None, cfl: float | None = None,
                t_final: float | None = None, sample_interval: float | None = None,
                limiter_mode: str = "auto", limiter_eps: float = 1e-15,
                velocity_mode: str = "nodal", backend: str | None = None) -> RunSetup:
    """Resolve experiment defaults (problem registry values unless overridden)."""
    if isinstance(scheme, str):
        scheme = Scheme(scheme)
    p = problem.p if p is None else p
    m = problem.m if m is None else m
    if n_q is None:
        n_q = problem.n_q if problem.n_q is not None else 2 * p + 3
    cfl = problem.cfl if cfl is None else cfl
    t_final = problem.t_final if t_final is None else t_final
    sample_interval = problem.sample_interval if sample_interval is None else sample_interval
    mesh = build_mesh(MeshSpec(problem.dim, m))
    disc = Discretization(mesh, BasisSpec(p), n_q)
    op = SemidiscreteOperator(disc, problem.velocity, scheme,
                              velocity_mode=velocity_mode, backend=backend)
    r0 = DensityState.from_function(disc, problem.initial_density)
    tc = TimeConfig(cfl, t_final, sample_interval, limiter_mode, limiter_eps)
    return RunSetup(problem, scheme, disc, op, r0, tc)


def run_experiment(problem: ProblemSpec, scheme: Scheme | str, *,
                   with_errors: bool = True, **kwargs) -> RunResult:
    """Integrate one configuration; optionally attach per-sample error reports."""
    setup = build_setup(problem, scheme, **kwargs)
    result = integrate(setup.op, setup.r0, setup.time_config)
    run = RunResult(setup, result)
    if with_errors:
        evaluator = ErrorEvaluator(setup.disc, problem)
        limiter_counts = result.limiter_counts_per_sample()
        for k, (t, state) in enumerate(run.states()):
            run.reports.append(evaluator.report(state, t, limiter_counts[k]))
    return run


def run_for_convergence(scheme, problem: ProblemSpec, m: int,
                        **overrides) -> tuple[MeanErrors | None, str]:
    """One resolution of a refinement sweep: mean errors, or a failure note."""
    run = run_experiment(problem, scheme, m=m, with_errors=True, **overrides)
    if not run.completed:
        f = run.integration.failure
        return None, f"positivity lost at t={f.t:.6g} in cell {f.cell}"
    n = len(run.reports)
    return MeanErrors(sum(r.l1 for r in run.reports) / n,
                      sum(r.l2 for r in run.reports) / n,
                      sum(r.kl for r in run.reports) / n, n), ""
