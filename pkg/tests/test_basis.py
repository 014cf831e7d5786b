import numpy as np
import pytest

from fisherdg.basis import (BasisSpec, clenshaw_curtis, lagrange_eval,
                            lagrange_grad, tensor_eval, tensor_grad)


def test_linear_hat_value():
    spec = BasisSpec(1)
    assert lagrange_eval(spec, 0, 0.25) == pytest.approx(0.75, abs=1e-15)


def test_interpolation_property():
    for p in (0, 1, 2, 3):
        spec = BasisSpec(p)
        for i, xi in enumerate(spec.nodes):
            for k, xk in enumerate(spec.nodes):
                expected = 1.0 if i == k else 0.0
                assert lagrange_eval(spec, i, xk) == pytest.approx(expected, abs=1e-13)


def test_value_against_direct_product_formula(rng):
    # independent evaluation: multiply the node factors one by one
    spec = BasisSpec(3)
    nodes = spec.nodes
    for _ in range(20):
        x = rng.random()
        for i in range(4):
            expected = 1.0
            for k in range(4):
                if k != i:
                    expected *= (x - nodes[k]) / (nodes[i] - nodes[k])
            assert lagrange_eval(spec, i, x) == pytest.approx(expected, rel=1e-13)


def test_partition_of_unity(rng):
    for p in (1, 2, 3):
        spec = BasisSpec(p)
        xs = rng.random(100)
        total = sum(lagrange_eval(spec, i, xs) for i in range(p + 1))
        assert np.max(np.abs(total - 1.0)) <= 1e-13


def test_grad_linear():
    spec = BasisSpec(1)
    for x in (0.0, 0.3, 1.0):
        assert lagrange_grad(spec, 1, x) == pytest.approx(1.0, abs=1e-14)


def test_grad_quadratic_endpoint():
    # L0 = (2x-1)(x-1) so L0'(0) = -3 on the reference cell
    assert lagrange_grad(BasisSpec(2), 0, 0.0) == pytest.approx(-3.0, abs=1e-13)


def test_grad_matches_central_differences(rng):
    step = 1e-6
    for p in (1, 2, 3):
        spec = BasisSpec(p)
        for _ in range(50):
            x = 0.05 + 0.9 * rng.random()
            for i in range(p + 1):
                fd = (lagrange_eval(spec, i, x + step)
                      - lagrange_eval(spec, i, x - step)) / (2 * step)
                assert lagrange_grad(spec, i, x) == pytest.approx(fd, abs=1e-7)


def test_grad_sums_to_zero(rng):
    for p in (1, 2, 3):
        spec = BasisSpec(p)
        xs = rng.random(20)
        total = sum(lagrange_grad(spec, i, xs) for i in range(p + 1))
        assert np.max(np.abs(total)) <= 1e-11


def test_index_out_of_range():
    spec = BasisSpec(2)
    with pytest.raises(IndexError):
        lagrange_eval(spec, 3, 0.5)
    with pytest.raises(IndexError):
        lagrange_grad(spec, -1, 0.5)


def test_tensor_eval_corners():
    spec = BasisSpec(1)
    assert tensor_eval(spec, (0, 0), (0.0, 0.0)) == pytest.approx(1.0, abs=0)
    # L1(1) * L0(0.5) = 1 * 0.5
    assert tensor_eval(spec, (1, 0), (1.0, 0.5)) == pytest.approx(0.5, abs=1e-15)


def test_tensor_partition_of_unity(rng):
    spec = BasisSpec(2)
    for _ in range(20):
        pt = rng.random(2)
        total = sum(tensor_eval(spec, (i, j), pt)
                    for i in range(3) for j in range(3))
        assert total == pytest.approx(1.0, abs=1e-14)


def test_tensor_grad_matches_fd(rng):
    spec = BasisSpec(2)
    step = 1e-6
    for _ in range(10):
        pt = 0.1 + 0.8 * rng.random(2)
        for idx in ((0, 0), (1, 2), (2, 1)):
            g = tensor_grad(spec, idx, pt)
            for axis in range(2):
                dp = np.array(pt)
                dm = np.array(pt)
                dp[axis] += step
                dm[axis] -= step
                fd = (tensor_eval(spec, idx, dp) - tensor_eval(spec, idx, dm)) / (2 * step)
                assert g[axis] == pytest.approx(fd, abs=1e-7)


def test_clenshaw_curtis_two_points():
    rule = clenshaw_curtis(2)
    assert np.allclose(rule.nodes, [0.0, 1.0], atol=0)
    assert np.allclose(rule.weights, [0.5, 0.5], atol=1e-15)


def test_clenshaw_curtis_three_points_is_simpson():
    rule = clenshaw_curtis(3)
    assert np.allclose(rule.nodes, [0.0, 0.5, 1.0], atol=1e-15)
    assert np.allclose(rule.weights, [1 / 6, 2 / 3, 1 / 6], atol=1e-15)


def test_clenshaw_curtis_rejects_below_two():
    with pytest.raises(ValueError):
        clenshaw_curtis(1)


def test_quartic_exact_with_five_points():
    rule = clenshaw_curtis(5)
    assert rule.integrate(lambda x: x ** 4) == pytest.approx(0.2, abs=1e-15)


def test_weights_positive_up_to_33():
    for n in range(2, 34):
        rule = clenshaw_curtis(n)
        assert np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("n_q", [3, 5, 11])
def test_monomial_exactness(n_q):
    rule = clenshaw_curtis(n_q)
    for k in range(n_q):
        exact = 1.0 / (k + 1)
        got = rule.integrate(lambda x: x ** k)
        assert abs(got - exact) <= 1e-13
