"""Heaviside-weighted elasticity state and the penalized compliance cost."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .fem_core import (Loads, Material, P2Elasticity, SolverError, barycentric_gradients,
                       elasticity, p2_basis_dbary, reaction_diffusion, solve_spd)
from .levelset import HeavisideKernel
from .mesh import Mesh

logger = logging.getLogger(__name__)

SOLVERS = ("direct", "cg")


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything needed to evaluate the cost of a level-set field.

    ``kernel`` is the smooth kernel of the cost; ``solver`` picks the linear
    solver for the state equation (``direct`` or ``cg``).
    """

    mesh: Mesh
    material: Material
    loads: Loads
    penalty: float
    kernel: HeavisideKernel
    solver: str = "direct"
    cg_tol: float = 1e-10

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}, expected one of {SOLVERS}")

    @property
    def fem(self) -> P2Elasticity:
        return elasticity(self.mesh, self.material)

    @property
    def lumped_mass(self) -> np.ndarray:
        return reaction_diffusion(self.mesh).lumped_mass


@dataclass(eq=False)
class StateSolution:
    g: np.ndarray
    displacement: np.ndarray
    h_nodal: np.ndarray  # kernel values used in the state equation
    compliance_volume_term: float
    compliance_surface_term: float
    volume_term: float
    cost: float
    kernel: HeavisideKernel
    info: dict = field(default_factory=dict)


def volume_of(mesh: Mesh, g: np.ndarray, kernel: HeavisideKernel) -> float:
    """Integral of the P1 interpolant of the nodal kernel values."""
    return float(reaction_diffusion(mesh).lumped_mass @ kernel.value(np.asarray(g, dtype=float)))


def _solve(problem: Problem, A, b, info: dict) -> np.ndarray:
    if problem.solver == "cg":
        return solve_spd(A, b, rel_tol=problem.cg_tol, info=info)
    if not np.any(b):
        return np.zeros_like(b)
    # Symmetric mode keeps the (nearly) floating void modes near zero, like CG does.
    try:
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}", np.inf, 0) from exc
    u = lu.solve(b)
    bnorm = np.linalg.norm(b)
    res = float(np.linalg.norm(b - A @ u) / bnorm)
    steps = 0
    # iterative refinement for nearly singular (deep void) systems
    while np.isfinite(res) and res > 1e-10 and steps < 5:
        u = u + lu.solve(b - A @ u)
        res = float(np.linalg.norm(b - A @ u) / bnorm)
        steps += 1
    if not np.isfinite(res) or res > 1e-6:
        logger.info("direct solve residual %.2e after refinement, falling back to CG", res)
        return solve_spd(A, b, rel_tol=problem.cg_tol, x0=u if np.isfinite(res) else None, info=info)
    info.update(iterations=steps, residual=res)
    return u


def solve_state(problem: Problem, g: np.ndarray, kernel: HeavisideKernel | None = None) -> StateSolution:
    """Solve the weighted elasticity problem for level set ``g`` and evaluate the cost.

    The state equation uses ``kernel.for_state()`` (floored below
    epsilon = 1e-2); the penalty volume term uses ``kernel`` itself.
    """
    kernel = kernel or problem.kernel
    g = np.asarray(g, dtype=float)
    fem = problem.fem
    h = np.asarray(kernel.for_state().value(g), dtype=float)
    A = fem.stiffness(h)
    b_vol = fem.rhs(Loads(problem.loads.body_force, (0.0, 0.0)), h)
    b_surf = fem.rhs(Loads((0.0, 0.0), problem.loads.traction), h)
    info: dict = {}
    u = _solve(problem, A, b_vol + b_surf, info)
    vol = volume_of(problem.mesh, g, kernel)
    c_vol = float(b_vol @ u)
    c_surf = float(b_surf @ u)
    return StateSolution(g=g, displacement=u, h_nodal=h, compliance_volume_term=c_vol,
                         compliance_surface_term=c_surf, volume_term=vol,
                         cost=c_vol + c_surf + problem.penalty * vol, kernel=kernel, info=info)


def cost(problem: Problem, g: np.ndarray, kernel: HeavisideKernel | None = None) -> float:
    return solve_state(problem, g, kernel).cost


def inside_triangles(mesh: Mesh, g: np.ndarray) -> np.ndarray:
    """Triangles whose three vertex values of ``g`` are nonnegative."""
    return np.all(np.asarray(g)[mesh.triangles] >= 0, axis=1)


def difference_norms(fem: P2Elasticity, u: np.ndarray, v: np.ndarray, mask: np.ndarray | None = None):
    """L2 and H1 norms of ``u - v`` over the triangles selected by ``mask``."""
    diff = np.asarray(u) - np.asarray(v)
    vals = fem.displacement_at_quadrature(diff)  # (nt, nq, 2)
    p2 = fem.mesh.p2_triangles
    gl, _ = barycentric_gradients(fem.mesh.vertices[fem.mesh.triangles])
    gn = np.einsum("qab,tbc->tqac", p2_basis_dbary(fem.bary), gl)  # (nt, nq, 6, 2)
    grad = np.einsum("tqad,tac->tqcd", gn, diff.reshape(-1, 2)[p2])  # (nt, nq, 2, 2)
    l2_q = np.sum(vals ** 2, axis=2)
    h1_q = np.sum(grad ** 2, axis=(2, 3))
    w = fem.area[:, None] * fem.qw[None]
    if mask is not None:
        w = w * np.asarray(mask, dtype=float)[:, None]
    l2 = float(np.sum(w * l2_q))
    semi = float(np.sum(w * h1_q))
    return np.sqrt(l2), np.sqrt(l2 + semi)
