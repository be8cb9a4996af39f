"""Fixed-domain topology optimization for minimal compliance in 2D linear elasticity.

A level-set field ``g`` on a fixed rectangle defines the design
``{g >= 0}``; the elasticity problem is solved on the whole rectangle with
the stiffness weighted by a regularized Heaviside function of ``g``.
"""
from .fem_core import Loads, Material, SolverError, solve_spd
from .levelset import HeavisideKernel, SaturationR, Variant
from .mesh import BoundaryLabel, BoundarySegment, Mesh, Rect, boundary_edges, build_mesh
from .optimizer import OptimizerConfig, StopReason, line_search, optimize
from .presets import bridge, cantilever, get_preset
from .sensitivity import DescentChoice, compute_d, descent_direction, directional_derivative
from .state import Problem, StateSolution, solve_state, volume_of

__all__ = [
    "BoundaryLabel", "BoundarySegment", "DescentChoice", "HeavisideKernel", "Loads", "Material",
    "Mesh", "OptimizerConfig", "Problem", "Rect", "SaturationR", "SolverError", "StateSolution",
    "StopReason", "Variant", "boundary_edges", "bridge", "build_mesh", "cantilever", "compute_d",
    "descent_direction", "directional_derivative", "get_preset", "line_search", "optimize",
    "solve_spd", "solve_state", "volume_of",
]
