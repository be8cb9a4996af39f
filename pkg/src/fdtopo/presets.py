"""Benchmark problems: cantilever and bridge."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .fem_core import Loads, Material
from .levelset import HeavisideKernel
from .mesh import BoundaryLabel, BoundarySegment, Mesh, Rect, build_mesh
from .state import Problem


def _g0_cantilever(x, y):
    return 0.1 - np.sin(4 * np.pi * x) * np.sin(3 * np.pi * (y - 0.5))


def _g0_bridge_sinusoidal(x, y):
    return 0.1 - np.sin(4 * np.pi * (x - 0.125)) * np.sin(4 * np.pi * (y - 0.5))


def _g0_bridge_half(x, y):
    return 0.1 * (0.6 - y)


INITIAL_GUESSES = {
    "cantilever": _g0_cantilever,
    "bridge-sinusoidal": _g0_bridge_sinusoidal,
    "bridge-half": _g0_bridge_half,
}


class BridgeInit(enum.Enum):
    SINUSOIDAL = "sinusoidal"
    HALF_DOMAIN = "half"


@dataclass(frozen=True)
class Preset:
    name: str
    rect: Rect
    boundary: tuple[BoundarySegment, ...]
    material: Material
    loads: Loads
    penalty: float
    epsilon: float
    rho: float
    g0_name: str
    resolution: tuple[int, int]
    tol: float = 1e-6
    max_iters: int = 50

    def g0(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return INITIAL_GUESSES[self.g0_name](points[..., 0], points[..., 1])

    def build_mesh(self, resolution: tuple[int, int] | None = None) -> Mesh:
        n_x, n_y = resolution or self.resolution
        return build_mesh(self.rect, n_x, n_y, list(self.boundary))

    def problem(self, resolution=None, mesh: Mesh | None = None, solver: str = "direct",
                epsilon: float | None = None) -> Problem:
        mesh = mesh or self.build_mesh(resolution)
        kernel = HeavisideKernel.smooth(self.epsilon if epsilon is None else epsilon)
        return Problem(mesh=mesh, material=self.material, loads=self.loads,
                       penalty=self.penalty, kernel=kernel, solver=solver)

    def with_overrides(self, **changes) -> "Preset":
        return replace(self, **changes)


def cantilever() -> Preset:
    return Preset(
        name="cantilever",
        rect=Rect(0.0, 2.0, -0.5, 0.5),
        boundary=(BoundarySegment(BoundaryLabel.SigmaD, (-0.5, 0.5), "left"),
                  BoundarySegment(BoundaryLabel.GammaN, (-0.1, 0.1), "right")),
        material=Material(1.0, 8.0),
        loads=Loads((0.0, 0.0), (0.0, -5.0)),
        penalty=0.5,
        epsilon=1e-2,
        rho=0.6,
        g0_name="cantilever",
        resolution=(120, 60),
        tol=1e-6,
        max_iters=50,
    )


def bridge(init: BridgeInit | str = BridgeInit.SINUSOIDAL, plane: str = "strain") -> Preset:
    init = BridgeInit(init)
    return Preset(
        name="bridge" if init is BridgeInit.SINUSOIDAL else "bridge-half",
        rect=Rect(-1.0, 1.0, 0.0, 1.2),
        boundary=(BoundarySegment(BoundaryLabel.SigmaD, (-1.0, -0.9), "bottom"),
                  BoundarySegment(BoundaryLabel.SigmaD, (0.9, 1.0), "bottom"),
                  BoundarySegment(BoundaryLabel.GammaN, (-0.1, 0.1), "bottom")),
        material=Material.from_young_poisson(1.0, 0.3, plane),
        loads=Loads((0.0, 0.0), (0.0, -1.0)),
        penalty=0.1,
        epsilon=1e-2,
        rho=0.6,
        g0_name="bridge-sinusoidal" if init is BridgeInit.SINUSOIDAL else "bridge-half",
        resolution=(100, 60),
        tol=1e-6,
        max_iters=100,
    )


PRESETS = {
    "cantilever": cantilever,
    "bridge": lambda: bridge(BridgeInit.SINUSOIDAL),
    "bridge-half": lambda: bridge(BridgeInit.HALF_DOMAIN),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
