"""Descent loop with a geometric line search."""
from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem_core import SolverError
from .mesh import BoundaryLabel
from .sensitivity import DescentChoice, compute_d, descent_direction, directional_derivative
from .state import Problem, StateSolution, solve_state

logger = logging.getLogger(__name__)


class StopReason(enum.Enum):
    NONE = "None"
    GRAD_ZERO = "GradZero"
    MAX_ITERS = "MaxIters"
    STAGNATION = "Stagnation"
    LINE_SEARCH_FAILED = "LineSearchFailed"


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 50
    tol: float = 1e-6
    rho: float = 0.6
    ls_max: int = 10
    direction: DescentChoice = field(default_factory=DescentChoice)
    grad_tol: float | None = None  # None: 1e-8 * max(1, |J(g0)|)

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.ls_max < 1:
            raise ValueError("ls_max must be at least 1")


@dataclass
class IterationRecord:
    iter: int
    cost: float  # J(g_n)
    jprime_w: float
    step: float  # accepted lambda, 0 when no step was taken
    volume: float
    ls_trials: int
    stop_reason: StopReason = StopReason.NONE


@dataclass
class LineSearchResult:
    step: float | None
    cost: float
    trials: int
    failed_trials: list = field(default_factory=list)
    index: int | None = None

    @property
    def failed(self) -> bool:
        return self.step is None


def line_search(g: np.ndarray, w: np.ndarray, config: OptimizerConfig,
                evaluator: Callable[[np.ndarray], float], current_cost: float) -> LineSearchResult:
    """Try ``lambda = rho**i`` for ``i < ls_max`` and keep the cheapest trial.

    The search fails when no trial beats ``current_cost``. Trials whose
    evaluation raises ``SolverError`` are skipped and listed in
    ``failed_trials``.
    """
    best_cost, best_i = np.inf, None
    failed = []
    for i in range(config.ls_max):
        lam = config.rho ** i
        try:
            c = float(evaluator(g + lam * w))
        except SolverError as exc:
            logger.warning("line search trial %d (lambda=%.4g) failed: %s", i, lam, exc)
            failed.append(i)
            continue
        if c < best_cost:
            best_cost, best_i = c, i
    if best_i is None or not best_cost < current_cost:
        return LineSearchResult(None, best_cost, config.ls_max, failed)
    return LineSearchResult(config.rho ** best_i, best_cost, config.ls_max, failed, best_i)


class OptimizationAborted(RuntimeError):
    """A solve outside the line search failed; ``history`` holds the completed iterations."""

    def __init__(self, message: str, history: list, g: np.ndarray):
        super().__init__(message)
        self.history = history
        self.g = g


@dataclass
class OptimizationResult:
    g: np.ndarray
    history: list[IterationRecord]
    state: StateSolution
    stop_reason: StopReason

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.history] + [self.state.cost])


def _check_admissibility(problem: Problem, g: np.ndarray, n: int) -> None:
    mesh = problem.mesh
    gamma_n = mesh.vertices_on(BoundaryLabel.GammaN)
    if len(gamma_n) and np.any(g[gamma_n] <= 0):
        logger.warning("iteration %d: g <= 0 at %d node(s) of the loaded boundary",
                       n, int(np.sum(g[gamma_n] <= 0)))
    sigma_d = mesh.vertices_on(BoundaryLabel.SigmaD)
    if len(sigma_d) and not np.any(g[sigma_d] >= 0):
        logger.warning("iteration %d: the design does not touch the Dirichlet boundary", n)


def optimize(problem: Problem, g0: np.ndarray, config: OptimizerConfig,
             callback: Callable[[IterationRecord, np.ndarray, StateSolution], None] | None = None
             ) -> OptimizationResult:
    """Run the descent loop from ``g0``.

    One record per completed iteration; the final iterate and its state are
    in the result. ``callback`` receives each record together with the
    iterate ``g_n`` it describes and that iterate's state.
    """
    kernel = problem.kernel
    g = np.array(g0, dtype=float)
    try:
        state = solve_state(problem, g)
    except SolverError as exc:
        raise OptimizationAborted(f"initial state solve failed: {exc}", [], g) from exc
    grad_tol = config.grad_tol if config.grad_tol is not None else 1e-8 * max(1.0, abs(state.cost))
    history: list[IterationRecord] = []
    n = 0
    while True:
        _check_admissibility(problem, g, n)
        sens = compute_d(problem, state)
        try:
            w = descent_direction(config.direction, problem, g, sens, kernel)
        except SolverError as exc:
            raise OptimizationAborted(f"iteration {n}: {exc}", history, g) from exc
        jw = directional_derivative(g, w, sens, kernel)
        rec = IterationRecord(n, state.cost, jw, 0.0, state.volume_term, 0)
        if abs(jw) <= grad_tol:
            rec.stop_reason = StopReason.GRAD_ZERO
            history.append(rec)
            if callback:
                callback(rec, g, state)
            break

        trial_states: dict[int, StateSolution] = {}
        counter = itertools.count()

        def evaluate(trial_g):
            idx = next(counter)  # equals the power of rho, failed trials included
            trial_states[idx] = solve_state(problem, trial_g)
            return trial_states[idx].cost

        ls = line_search(g, w, config, evaluate, state.cost)
        rec.ls_trials = ls.trials
        if ls.failed:
            rec.stop_reason = StopReason.LINE_SEARCH_FAILED
            history.append(rec)
            if callback:
                callback(rec, g, state)
            break
        rec.step = ls.step
        new_state = trial_states[ls.index]
        history.append(rec)
        if n + 1 == config.max_iters:
            rec.stop_reason = StopReason.MAX_ITERS
        elif abs(state.cost - new_state.cost) < config.tol:
            rec.stop_reason = StopReason.STAGNATION
        if callback:
            callback(rec, g, state)
        g, state = new_state.g, new_state
        n += 1
        if rec.stop_reason is not StopReason.NONE:
            break
    return OptimizationResult(g=g, history=history, state=state, stop_reason=history[-1].stop_reason)
