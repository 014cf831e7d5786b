"""Nodal Lagrange bases on equidistant points and Clenshaw-Curtis quadrature.

All objects live on the reference cell [0,1] (tensorized to [0,1]^2 in
two dimensions, local node index flattened row-major over axes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BasisSpec:
    """Lagrange basis of order p on p+1 equidistant nodes of [0,1].

    For p = 0 the single node sits at 0.5 and the basis is the constant 1.
    """

    order: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order < 0:
            raise ValueError(f"order must be >= 0, got {self.order}")
        if self.order == 0:
            nodes = np.array([0.5])
        else:
            nodes = np.linspace(0.0, 1.0, self.order + 1)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_nodes(self) -> int:
        return self.order + 1

    def n_local(self, dim: int) -> int:
        return self.n_nodes ** dim

    def local_nodes(self, dim: int) -> np.ndarray:
        """All tensor-product nodes of the reference cell, shape (n_local, dim)."""
        if dim == 1:
            return self.nodes[:, None]
        a, b = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        return np.stack([a.ravel(), b.ravel()], axis=1)


def _check_index(spec: BasisSpec, i: int):
    if not 0 <= i <= spec.order:
        raise IndexError(f"basis index {i} out of range for order {spec.order}")


def lagrange_eval(spec: BasisSpec, i: int, x) -> np.ndarray | float:
    """Value of the i-th 1D Lagrange polynomial at x (scalar or array)."""
    _check_index(spec, i)
    x = np.asarray(x, dtype=float)
    nodes = spec.nodes
    out = np.ones_like(x)
    for k in range(spec.n_nodes):
        if k == i:
            continue
        out = out * (x - nodes[k]) / (nodes[i] - nodes[k])
    return out if out.ndim else float(out)


def lagrange_grad(spec: BasisSpec, i: int, x) -> np.ndarray | float:
    """Derivative of the i-th 1D Lagrange polynomial at x.

    Sum-of-products form: L_i'(x) = sum_{j != i} 1/(x_i - x_j) *
    prod_{k != i,j} (x - x_k)/(x_i - x_k).
    """
    _check_index(spec, i)
    x = np.asarray(x, dtype=float)
    nodes = spec.nodes
    out = np.zeros_like(x)
    for j in range(spec.n_nodes):
        if j == i:
            continue
        term = np.ones_like(x) / (nodes[i] - nodes[j])
        for k in range(spec.n_nodes):
            if k in (i, j):
                continue
            term = term * (x - nodes[k]) / (nodes[i] - nodes[k])
        out = out + term
    return out if out.ndim else float(out)


def tensor_index(spec: BasisSpec, flat: int, dim: int) -> tuple[int, ...]:
    """Unflatten a local node index (row-major over axes)."""
    n = spec.n_nodes
    if dim == 1:
        return (flat,)
    return (flat // n, flat % n)


def tensor_eval(spec: BasisSpec, index, point) -> float:
    """Tensor-product basis value: the product of 1D evaluations per axis."""
    index = tuple(np.atleast_1d(index))
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if len(index) != len(point):
        raise ValueError("index and point dimension mismatch")
    out = 1.0
    for i, xi in zip(index, point):
        out *= lagrange_eval(spec, int(i), float(xi))
    return out


def tensor_grad(spec: BasisSpec, index, point) -> np.ndarray:
    """Gradient of the tensor-product basis function, one component per axis."""
    index = tuple(np.atleast_1d(index))
    point = np.atleast_1d(np.asarray(point, dtype=float))
    dim = len(point)
    vals = [lagrange_eval(spec, int(i), float(x)) for i, x in zip(index, point)]
    ders = [lagrange_grad(spec, int(i), float(x)) for i, x in zip(index, point)]
    grad = np.empty(dim)
    for a in range(dim):
        g = ders[a]
        for b in range(dim):
            if b != a:
                g *= vals[b]
        grad[a] = g
    return grad


@dataclass(frozen=True)
class QuadRule:
    """Quadrature nodes/weights on [0,1]; weights are positive and sum to 1."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.nodes)

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def clenshaw_curtis(n_q: int) -> QuadRule:
    """Clenshaw-Curtis rule with n_q points on [0,1], endpoints included.

    Exact for polynomials of degree <= n_q - 1.  Weights follow the
    classical cosine-sum formula on [-1,1], halved for the unit interval.
    """
    if n_q < 2:
        raise ValueError(f"clenshaw_curtis needs n_q >= 2, got {n_q}")
    n = n_q - 1
    k = np.arange(n_q)
    # nodes descending on [-1,1] as cos(k pi / n); map to ascending [0,1]
    nodes = 0.5 * (1.0 - np.cos(k * np.pi / n))
    w = np.ones(n_q)
    for j in range(1, n // 2 + 1):
        b = 1.0 if 2 * j == n else 2.0
        w -= b / (4.0 * j * j - 1.0) * np.cos(2.0 * j * k * np.pi / n)
    # dividing by n (not n/2) halves the classical [-1,1] weights, which
    # is exactly the rescaling onto the unit interval
    w /= n
    w[0] *= 0.5
    w[-1] *= 0.5
    w = 0.5 * (w + w[::-1])  # enforce exact symmetry
    nodes = 0.5 * (nodes - nodes[::-1]) + 0.5
    nodes[0] = 0.0
    nodes[-1] = 1.0
    return QuadRule(nodes, w)
