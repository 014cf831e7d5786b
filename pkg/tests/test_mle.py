import numpy as np
import pytest

from fisherdg.assembly import DensityState, velocity_1d
from fisherdg.basis import BasisSpec
from fisherdg.mesh import MeshSpec, build_mesh
from fisherdg.mle import CellMLE, advected_regions, consistency_check, mle_step_cell
from fisherdg.operators import Discretization
from fisherdg.reference import get_problem


def unit_velocity():
    return get_problem("ex3").velocity


def smooth_state(disc):
    pts = disc.node_points()
    return DensityState(disc, (1.2 + 0.5 * np.sin(2 * np.pi * pts[..., 0])).reshape(-1))


@pytest.fixture
def oracle_disc():
    return Discretization(build_mesh(MeshSpec(1, 8)), BasisSpec(1), n_q=11)


def test_regions_linear_shift():
    disc = Discretization(build_mesh(MeshSpec(1, 4)), BasisSpec(1))
    reg = advected_regions(disc, 0, unit_velocity(), 0.1)
    assert reg.stay == pytest.approx((0.0, 0.15), abs=1e-12)
    assert reg.leave == pytest.approx((0.15, 0.25), abs=1e-12)
    assert reg.enter == pytest.approx((-0.1, 0.0), abs=1e-12)


def test_regions_zero_dt():
    disc = Discretization(build_mesh(MeshSpec(1, 4)), BasisSpec(1))
    reg = advected_regions(disc, 2, unit_velocity(), 0.0)
    assert reg.stay == (0.5, 0.75)
    assert reg.leave == (0.75, 0.75)
    assert reg.enter == (0.5, 0.5)


def test_regions_root_residuals(oracle_disc):
    vel = get_problem("ex1").velocity
    dt = 1e-3
    for cell in (0, 3, 7):
        reg = advected_regions(oracle_disc, cell, vel, dt)

        def shift(x):
            return x + dt * float(vel(np.array([[x % 1.0]]))[0, 0])

        assert abs(shift(reg.x_exit) - reg.b) <= 1e-12
        assert abs(shift(reg.x_entry) - reg.a) <= 1e-12


def test_regions_reject_large_dt(oracle_disc):
    with pytest.raises(ValueError):
        advected_regions(oracle_disc, 0, get_problem("ex1").velocity, 0.2)


def test_regions_require_positive_velocity(oracle_disc):
    vel = velocity_1d(lambda x: np.sin(2 * np.pi * np.asarray(x, dtype=float)),
                      lambda x: 2 * np.pi * np.cos(2 * np.pi * np.asarray(x, dtype=float)),
                      speed_bound=1.0)
    with pytest.raises(ValueError):
        advected_regions(oracle_disc, 0, vel, 1e-3)


def test_zero_dt_returns_current_coefficients(oracle_disc):
    state = smooth_state(oracle_disc)
    kkt = mle_step_cell(oracle_disc, state, 2, get_problem("ex1").velocity, 0.0)
    assert kkt.iterations == 0
    assert kkt.residual <= 1e-12
    assert np.max(np.abs(kkt.coeffs - state.by_cell[2])) <= 1e-12
    assert kkt.multiplier == pytest.approx(1.0, abs=1e-12)


def test_mass_balance(oracle_disc):
    state = smooth_state(oracle_disc)
    vel = get_problem("ex1").velocity
    cell, dt = 3, 5e-3
    problem = CellMLE(oracle_disc, state, cell, vel, dt)
    kkt = problem.solve()
    new_mass = float(kkt.coeffs @ problem.phi_mass)
    assert abs(new_mass - problem.mass_target) <= 1e-11


def test_kkt_jacobian_matches_finite_differences(oracle_disc, rng):
    state = smooth_state(oracle_disc)
    vel = get_problem("ex1").velocity
    problem = CellMLE(oracle_disc, state, 2, vel, 4e-3)
    coeffs = state.by_cell[2] + 0.05 * rng.random(2)
    lam = 1.03
    J = problem.jacobian(coeffs, lam)
    step = 1e-6
    for col in range(3):
        dc = np.zeros(3)
        dc[col] = step
        rp = problem.residual(coeffs + dc[:2], lam + dc[2])
        rm = problem.residual(coeffs - dc[:2], lam - dc[2])
        fd = (rp - rm) / (2 * step)
        scale = np.maximum(np.abs(J[:, col]), 1e-8)
        assert np.max(np.abs(J[:, col] - fd) / scale) <= 1e-6


def test_solution_is_constrained_maximum(oracle_disc):
    # scan the likelihood along the mass-constraint line through the KKT point
    state = smooth_state(oracle_disc)
    vel = get_problem("ex1").velocity
    cell, dt = 2, 5e-3
    problem = CellMLE(oracle_disc, state, cell, vel, dt)
    kkt = problem.solve()

    from scipy.integrate import quad

    def objective(coeffs):
        rho_new = problem.candidate(coeffs)
        val = 0.0
        for interval, dens in ((problem.regions.stay, problem.rho_cell),
                               (problem.regions.enter, problem.rho_up)):
            lo, hi = interval
            if hi > lo:
                val += quad(lambda x: np.log(rho_new(problem.shift(x))) * dens(x),
                            lo, hi, epsabs=1e-12, limit=200)[0]
        return val

    w = problem.phi_mass

    def on_constraint(c0):
        c1 = (problem.mass_target - c0 * w[0]) / w[1]
        return np.array([c0, c1])

    best = objective(kkt.coeffs)
    for dc in (-2e-3, -1e-3, 1e-3, 2e-3):
        other = objective(on_constraint(kkt.coeffs[0] + dc))
        assert other <= best + 1e-12


def test_consistency_discrepancy_halves(oracle_disc):
    state = smooth_state(oracle_disc)
    res = consistency_check(oracle_disc, state, 2, get_problem("ex1").velocity,
                            [1e-2, 5e-3, 2.5e-3, 1.25e-3])
    for coarse, fine in zip(res.discrepancies, res.discrepancies[1:]):
        assert 1.7 <= coarse / fine <= 2.3
    assert 0.8 <= res.slope <= 1.2


def test_consistency_constant_everything(oracle_disc):
    state = DensityState(oracle_disc, np.full(oracle_disc.n_cells * oracle_disc.n_loc, 2.0))
    res = consistency_check(oracle_disc, state, 3, unit_velocity(),
                            [1e-2, 5e-3, 2.5e-3])
    assert max(res.discrepancies) <= 1e-10
