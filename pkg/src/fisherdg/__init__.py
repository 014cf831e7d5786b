"""fisherdg: positivity-preserving transport solvers.

Discontinuous Galerkin semidiscretizations of the linear transport
equation on periodic [0,1]^d (d = 1, 2), in three flavors: plain DG, DG
with the mean-scaling positivity limiter, and the Fisher-Rao weighted DG
scheme whose projection emphasizes relative instead of absolute errors
and keeps densities positive without limiting.
"""

__version__ = "0.1.0"

from .assembly import DensityState, PositivityLost, VelocityField
from .basis import BasisSpec, QuadRule, clenshaw_curtis
from .mesh import Mesh, MeshSpec, build_mesh, locate_cell
from .operators import Discretization
from .reference import ProblemSpec, exact_density, get_problem, registered_problems
from .semidiscrete import Scheme, apply_positivity_limiter, dfrg_rhs, dg_rhs
from .timestepping import TimeConfig, integrate, ssprk3_step

__all__ = [
    "__version__",
    "BasisSpec", "QuadRule", "clenshaw_curtis",
    "Mesh", "MeshSpec", "build_mesh", "locate_cell",
    "Discretization", "DensityState", "VelocityField", "PositivityLost",
    "Scheme", "dg_rhs", "dfrg_rhs", "apply_positivity_limiter",
    "TimeConfig", "integrate", "ssprk3_step",
    "ProblemSpec", "exact_density", "get_problem", "registered_problems",
]
