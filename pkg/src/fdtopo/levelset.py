"""Regularized Heaviside kernels and the saturation function R.

Fields on the mesh are plain numpy arrays of P1 nodal values; a kernel
applied to a field acts node by node and the result is again read as a P1
field (it is *not* the kernel of the interpolated level set).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

CLAMP_FLOOR = 1e-4
REFERENCE_FLOOR = 1e-9


class Variant(enum.Enum):
    SMOOTH = "smooth"
    CLAMPED = "clamped"
    STEP = "step"
    REFERENCE = "reference"


@dataclass(frozen=True)
class HeavisideKernel:
    epsilon: float
    variant: Variant = Variant.SMOOTH

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @classmethod
    def smooth(cls, epsilon: float) -> "HeavisideKernel":
        return cls(epsilon, Variant.SMOOTH)

    def value(self, r):
        """Kernel value; scalars in, scalar out."""
        r = np.asarray(r, dtype=float)
        if self.variant is Variant.STEP:
            out = np.where(r >= 0, 1.0, self.epsilon)
        elif self.variant is Variant.REFERENCE:
            out = np.where(r >= 0, 1.0, REFERENCE_FLOOR)
        else:
            tail = 0.5 * np.exp(-np.abs(r) / self.epsilon)
            if self.variant is Variant.CLAMPED:
                out = np.where(r >= 0, 1.0 - tail, np.maximum(CLAMP_FLOOR, tail))
            else:
                out = np.where(r >= 0, 1.0 - tail, tail)
        return out[()] if out.ndim == 0 else out

    def derivative(self, r):
        if self.variant is not Variant.SMOOTH:
            raise NotImplementedError(
                f"derivative is only defined for the smooth kernel, not {self.variant.value}")
        r = np.asarray(r, dtype=float)
        out = np.exp(-np.abs(r) / self.epsilon) / (2.0 * self.epsilon)
        return out[()] if out.ndim == 0 else out

    def for_state(self) -> "HeavisideKernel":
        """Kernel used inside the state equation.

        Small-epsilon smooth kernels make the stiffness nearly singular, so
        below 1e-2 the negative branch is floored at ``CLAMP_FLOOR``.
        """
        if self.variant is Variant.SMOOTH and self.epsilon < 1e-2:
            return HeavisideKernel(self.epsilon, Variant.CLAMPED)
        return self


def h_value(kernel: HeavisideKernel, r):
    return kernel.value(r)


def h_derivative(kernel: HeavisideKernel, r):
    return kernel.derivative(r)


@dataclass(frozen=True)
class SaturationR:
    """Odd, strictly increasing map of the real line onto ``(-c, c)``."""

    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.sign(r) * (-self.c * np.expm1(-np.abs(r)))
        return out[()] if out.ndim == 0 else out


def r_value(sat: SaturationR, r):
    return sat(r)


def field_apply(values: np.ndarray, kernel: HeavisideKernel) -> np.ndarray:
    """Nodal kernel values of a P1 field."""
    return np.asarray(kernel.value(np.asarray(values, dtype=float)), dtype=float)
