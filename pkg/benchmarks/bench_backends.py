#!/usr/bin/env python3
"""Benchmark the RHS kernel backends (numpy vs compiled) on the benchmark
problem sizes.  Run directly: python benchmarks/bench_backends.py
"""

import time

import numpy as np

from fisherdg._kernels import available_backends
from fisherdg.assembly import DensityState
from fisherdg.basis import BasisSpec
from fisherdg.mesh import MeshSpec, build_mesh
from fisherdg.operators import Discretization
from fisherdg.reference import get_problem
from fisherdg.semidiscrete import Scheme, SemidiscreteOperator

CASES = [
    ("1D m=256 p=1 (mild compression)", "ex1", 1, 256, 1),
    ("1D m=64  p=3 (fine details)", "ex4", 1, 64, 3),
    ("2D m=32  p=1 (swirl)", "ex6", 2, 32, 1),
]


def time_rhs(op, coeffs, repeats):
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeats):
            op(coeffs, 0.0)
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def main():
    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    header = f"{'case':38s} {'scheme':6s}" + "".join(f" {b:>12s}" for b in backends)
    if len(backends) > 1:
        header += f" {'speedup':>9s}"
    print(header)
    for label, pid, dim, m, p in CASES:
        problem = get_problem(pid)
        disc = Discretization(build_mesh(MeshSpec(dim, m)), BasisSpec(p))
        state = DensityState.from_function(disc, problem.initial_density)
        repeats = max(5, int(2e5 / (disc.n_cells * disc.n_loc)))
        for kind in ("dg", "dfrg"):
            times = []
            for backend in backends:
                op = SemidiscreteOperator(disc, problem.velocity, Scheme(kind),
                                          backend=backend)
                times.append(time_rhs(op, state.coeffs, repeats))
            row = f"{label:38s} {kind:6s}" + "".join(f" {t*1e6:9.1f} us" for t in times)
            if len(times) > 1:
                row += f" {times[0]/times[-1]:8.1f}x"
            print(row)


if __name__ == "__main__":
    main()
