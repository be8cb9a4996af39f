"""Sensitivity density, directional derivative and descent directions.

The derivative is evaluated exactly for the discrete cost: the Heaviside
weight is the P1 interpolant of nodal kernel values, so its variation along
``w`` is the P1 interpolant of ``H'(g_i) w_i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem_core import reaction_diffusion, solve_spd
from .levelset import HeavisideKernel, SaturationR
from .state import Problem, StateSolution


@dataclass(frozen=True)
class DescentChoice:
    """One of the three descent directions: ``i``, ``ii`` (with ``c``) or ``iii`` (with ``gamma``)."""

    kind: str = "i"
    c: float = 1.0
    gamma: float = 0.001

    def __post_init__(self):
        if self.kind not in ("i", "ii", "iii"):
            raise ValueError(f"direction must be 'i', 'ii' or 'iii', got {self.kind!r}")
        if not (self.c > 0 and self.gamma > 0):
            raise ValueError("c and gamma must be positive")


@dataclass(eq=False)
class SensitivityField:
    d_quad: np.ndarray  # (nt, nq) values at the quadrature points
    moments: np.ndarray  # (nv,) integral of phi_i * d
    d_p1: np.ndarray  # (nv,) lumped-mass projection


def compute_d(problem: Problem, state: StateSolution) -> SensitivityField:
    """``2 f.y + l - (lambda (div y)^2 + 2 mu e(y):e(y))`` at quadrature points, plus its P1 projection."""
    fem = problem.fem
    u = state.displacement
    d = problem.penalty - fem.energy_density(u)
    f = np.asarray(problem.loads.body_force, dtype=float)
    if np.any(f):
        d = d + 2.0 * fem.displacement_at_quadrature(u) @ f
    return sensitivity_from_quadrature(problem, d)


def sensitivity_from_quadrature(problem: Problem, d_quad: np.ndarray) -> SensitivityField:
    fem = problem.fem
    mesh = problem.mesh
    weighted = d_quad * fem.area[:, None] * fem.qw[None]  # (nt, nq)
    local = weighted @ fem.bary  # (nt, 3): integral of d * lambda_k
    moments = np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    return SensitivityField(d_quad=d_quad, moments=moments, d_p1=moments / problem.lumped_mass)


def directional_derivative(g: np.ndarray, w: np.ndarray, sens: SensitivityField,
                           kernel: HeavisideKernel) -> float:
    """Derivative of the cost at ``g`` along ``w``.

    Integral of the P1 interpolant of ``H'(g) w`` against ``d``.
    """
    return float(np.sum(kernel.derivative(g) * np.asarray(w, dtype=float) * sens.moments))


def descent_direction(choice: DescentChoice, problem: Problem, g: np.ndarray,
                      sens: SensitivityField, kernel: HeavisideKernel | None = None,
                      info: dict | None = None) -> np.ndarray:
    kernel = kernel or problem.kernel
    g = np.asarray(g, dtype=float)
    if choice.kind == "i":
        return -kernel.value(g) * sens.d_p1
    if choice.kind == "ii":
        return -kernel.value(g) * SaturationR(choice.c)(sens.d_p1)
    smoothed = smooth_sensitivity(problem, g, sens, kernel, choice.gamma, info=info)
    return -smoothed


def smooth_sensitivity(problem: Problem, g: np.ndarray, sens: SensitivityField,
                       kernel: HeavisideKernel, gamma: float, info: dict | None = None) -> np.ndarray:
    """P1 solution of ``gamma (grad s, grad v) + (s, v) = (H'(g) d, v)`` for all v."""
    rhs = kernel.derivative(g) * sens.moments
    A = reaction_diffusion(problem.mesh).matrix(gamma)
    return solve_spd(A, rhs, rel_tol=1e-10, info=info)
