import math

import numpy as np
import pytest

from fisherdg.assembly import DensityState
from fisherdg.basis import BasisSpec, clenshaw_curtis
from fisherdg.mesh import MeshSpec, build_mesh
from fisherdg.metrics import (ErrorEvaluator, build_table, convergence_table,
                              error_norms, generalized_kl, kl_growth_diagnostic,
                              mean_error_over_time, MeanErrors)
from fisherdg.operators import Discretization
from fisherdg.reference import get_problem
from fisherdg.semidiscrete import dfrg_rhs


def make_disc(m=8, p=1, n_q=None):
    return Discretization(build_mesh(MeshSpec(1, m)), BasisSpec(p), n_q)


def test_exact_interpolant_has_zero_errors():
    ex1 = get_problem("ex1")  # rho_init = 1 lies in every basis span
    disc = make_disc()
    state = DensityState.from_function(disc, ex1.initial_density)
    rep = error_norms(state, ex1, 0.0)
    assert rep.l1 <= 1e-13 and rep.l2 <= 1e-13 and abs(rep.kl) <= 1e-13
    assert rep.total_mass == pytest.approx(1.0, abs=1e-13)
    assert rep.min_density == pytest.approx(1.0, abs=1e-13)


def test_doubled_density_gives_one_minus_log_two():
    ex1 = get_problem("ex1")
    disc = make_disc()
    state = DensityState(disc, np.full(disc.n_cells * disc.n_loc, 2.0))
    rep = error_norms(state, ex1, 0.0)
    assert rep.kl == pytest.approx(1.0 - math.log(2.0), abs=1e-12)
    assert rep.l1 == pytest.approx(1.0, abs=1e-12)


def test_negative_value_gives_infinite_kl():
    ex1 = get_problem("ex1")
    disc = make_disc()
    coeffs = np.ones(disc.n_cells * disc.n_loc)
    coeffs[0] = -0.1
    rep = error_norms(DensityState(disc, coeffs), ex1, 0.0)
    assert math.isinf(rep.kl)
    assert rep.min_density < 0.0
    assert "inf" in rep.csv_row()


def test_kl_direction_is_exact_then_numerical():
    # KL(rho || 2 rho) = 1 - log 2 whereas KL(2 rho || rho) = 2 log 2 - 1
    w = np.full(64, 1.0 / 64)
    rho = np.full(64, 1.0)
    assert generalized_kl(w, rho, 2 * rho) == pytest.approx(1 - math.log(2), abs=1e-13)
    assert generalized_kl(w, 2 * rho, rho) == pytest.approx(2 * math.log(2) - 1, abs=1e-13)


def test_generalized_kl_nonnegative(rng):
    w = np.full(128, 1.0 / 128)
    for _ in range(25):
        rho = 0.1 + rng.random(128)
        sigma = 0.1 + rng.random(128)
        assert generalized_kl(w, rho, sigma) >= 0.0
    rho = 0.5 + rng.random(128)
    assert abs(generalized_kl(w, rho, rho)) <= 1e-12


def test_mean_error_over_time_includes_t0_and_propagates_inf():
    ex1 = get_problem("ex1")
    disc = make_disc()
    exact = DensityState.from_function(disc, ex1.initial_density)
    doubled = DensityState(disc, 2.0 * exact.coeffs)
    mean = mean_error_over_time([(0.0, exact), (0.0, doubled)], ex1)
    assert mean.n_samples == 2
    assert mean.l1 == pytest.approx(0.5, abs=1e-12)  # (0 + 1)/2
    negative = DensityState(disc, exact.coeffs - 2.0)
    mean = mean_error_over_time([(0.0, exact), (0.0, negative)], ex1)
    assert math.isinf(mean.kl)
    with pytest.raises(ValueError):
        mean_error_over_time([], ex1)


def test_l2_insensitive_to_error_rule_refinement():
    ex1 = get_problem("ex1")
    disc = make_disc(m=16)
    state = DensityState(disc, np.full(disc.n_cells * disc.n_loc, 2.0)
                         + 0.1 * np.sin(np.arange(disc.n_cells * disc.n_loc)))
    base = ErrorEvaluator(disc, ex1).report(state, 0.0)
    fine = ErrorEvaluator(disc, ex1, rule=clenshaw_curtis(4 * disc.n_q + 2)).report(state, 0.0)
    assert abs(fine.l2 - base.l2) <= 0.01 * base.l2


def test_build_table_orders_and_failures():
    errors = {8: MeanErrors(4.0, 8.0, 1.0, 3), 16: MeanErrors(1.0, 2.0, math.inf, 3),
              32: None}
    rows = build_table(lambda m: (errors[m], "" if errors[m] else "boom"), [8, 16, 32])
    assert rows[0].order_l1 is None
    assert rows[1].order_l1 == pytest.approx(2.0)
    assert rows[1].order_l2 == pytest.approx(2.0)
    assert rows[1].order_kl is None  # inf has no order
    assert rows[2].l1 is None and rows[2].failure == "boom"
    # single-row sweep: no order cells at all
    rows = build_table(lambda m: (errors[8], ""), [8])
    assert rows[0].order_l2 is None


def test_build_table_validates_m_list():
    runner = lambda m: (MeanErrors(1, 1, 1, 1), "")
    with pytest.raises(ValueError):
        build_table(runner, [8, 12])
    with pytest.raises(ValueError):
        build_table(runner, [16, 8])


def test_convergence_table_runs_end_to_end():
    ex1 = get_problem("ex1")
    rows = convergence_table("dfrg", ex1, [8, 16], t_final=0.1, sample_interval=0.05)
    assert len(rows) == 2
    assert rows[1].l2 < rows[0].l2
    assert rows[1].order_l2 is not None and rows[1].order_l2 > 1.0


def test_2d_error_reports_end_to_end():
    from fisherdg.experiments import run_experiment
    ex6 = get_problem("ex6")
    run = run_experiment(ex6, "dfrg", m=8, t_final=0.04, sample_interval=0.02,
                         with_errors=True)
    assert run.completed
    assert len(run.reports) == 3
    assert run.reports[-1].l2 > run.reports[0].l2 >= 0.0
    assert math.isfinite(run.reports[-1].kl)
    assert run.reports[-1].total_mass == pytest.approx(run.reports[0].total_mass,
                                                       rel=1e-10)


def test_kl_growth_probe_independence_and_fd_agreement():
    ex1 = get_problem("ex1")
    disc = make_disc(m=16)
    from fisherdg.experiments import run_experiment
    run = run_experiment(ex1, "dfrg", m=16, t_final=0.2, sample_interval=0.1,
                         with_errors=False, velocity_mode="analytic")
    t = run.integration.times[-1]
    state = run.integration.final_state(disc)
    rdot = dfrg_rhs(state, ex1.velocity, velocity_mode="analytic")
    rng = np.random.default_rng(0)
    probes = [np.zeros_like(state.coeffs), state.coeffs,
              rng.normal(size=state.coeffs.size)]
    diag = kl_growth_diagnostic(state, rdot, ex1, t, probes, fd_delta=2e-3)
    assert diag.spread <= 1e-8
    tol = max(1e-6, 5.0 * diag.fd_delta ** 2)
    assert abs(diag.expression_values[0] - diag.fd_dkl_dt) <= tol
    assert diag.mixed_sign_interfaces == 0  # u > 0 everywhere on ex1
