"""Runtime selection of the semidiscrete RHS kernels.

Two interchangeable backends evaluate the hot per-step kernels: a pure
numpy implementation (`python`) and an optional Cython extension
(`compiled`).  The compiled one is preferred when importable; set the
environment variable ``FISHERDG_BACKEND=python|compiled`` or pass an
explicit name to force a choice.  Both expose ``dg_rhs(plan, r2)`` and
``dfrg_rhs(plan, r2)`` and raise :class:`KernelPositivity` when a
Fisher-Rao weight meets a non-positive density.
"""

from __future__ import annotations

import os


class KernelPositivity(Exception):
    """Non-positive density at a quadrature node inside a kernel."""

    def __init__(self, cell: int, node_kind: str, node: int, value: float):
        self.cell = cell
        self.node_kind = node_kind
        self.node = node
        self.value = value
        super().__init__(f"density {value:.3e} <= 0 at {node_kind} node {node} of cell {cell}")


def _try_compiled():
    try:
        from . import compiled
        return compiled
    except ImportError:
        return None


def available_backends() -> list[str]:
    names = ["python"]
    if _try_compiled() is not None:
        names.append("compiled")
    return names


def get_backend(name: str | None = None):
    """Return the backend module; `name` in {None, 'auto', 'python', 'compiled'}."""
    if name is None:
        name = os.environ.get("FISHERDG_BACKEND", "auto")
    if name == "auto":
        compiled = _try_compiled()
        if compiled is not None:
            return compiled
        name = "python"
    if name == "python":
        from . import python_ref
        return python_ref
    if name == "compiled":
        compiled = _try_compiled()
        if compiled is None:
            raise ImportError("compiled kernels are not available; "
                              "build them with `python setup.py build_ext --inplace`")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
