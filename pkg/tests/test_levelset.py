import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fdtopo.levelset import (CLAMP_FLOOR, HeavisideKernel, SaturationR, Variant, field_apply,
                             h_derivative, h_value, r_value)
from fdtopo.presets import cantilever

reals = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)
epsilons = st.floats(min_value=1e-4, max_value=1.0)


def test_smooth_values():
    k = HeavisideKernel.smooth(0.01)
    assert h_value(k, 0.0) == 0.5
    assert h_value(k, 0.01) == pytest.approx(1 - 0.5 * math.exp(-1), rel=1e-15)
    assert h_value(k, 0.01) == pytest.approx(0.8160603, abs=1e-7)


def test_variants():
    assert h_value(HeavisideKernel(0.001, Variant.CLAMPED), -1.0) == CLAMP_FLOOR == 1e-4
    assert h_value(HeavisideKernel(0.001, Variant.CLAMPED), 0.002) == h_value(HeavisideKernel.smooth(0.001), 0.002)
    assert h_value(HeavisideKernel(0.01, Variant.REFERENCE), -0.3) == 1e-9
    assert h_value(HeavisideKernel(0.01, Variant.REFERENCE), 0.0) == 1.0
    assert h_value(HeavisideKernel(0.05, Variant.STEP), -2.0) == 0.05
    assert h_value(HeavisideKernel(0.05, Variant.STEP), 0.0) == 1.0


def test_derivative_values():
    k = HeavisideKernel.smooth(0.01)
    assert h_derivative(k, 0.0) == pytest.approx(50.0, rel=1e-15)
    assert h_derivative(k, 0.02) == pytest.approx(6.7667642, rel=1e-7)
    assert h_derivative(k, -0.02) == h_derivative(k, 0.02)


def test_derivative_against_central_difference():
    k = HeavisideKernel.smooth(0.01)
    r, step = 0.005, 1e-7
    fd = (h_value(k, r + step) - h_value(k, r - step)) / (2 * step)
    assert abs(fd - h_derivative(k, r)) / abs(fd) <= 1e-6


@pytest.mark.parametrize("variant", [Variant.CLAMPED, Variant.STEP, Variant.REFERENCE])
def test_derivative_only_for_smooth(variant):
    with pytest.raises(NotImplementedError):
        h_derivative(HeavisideKernel(0.01, variant), 0.0)


def test_bad_epsilon():
    with pytest.raises(ValueError):
        HeavisideKernel.smooth(0.0)
    with pytest.raises(ValueError):
        SaturationR(-1.0)


def test_state_kernel_switch():
    assert HeavisideKernel.smooth(0.01).for_state().variant is Variant.SMOOTH
    assert HeavisideKernel.smooth(0.005).for_state() == HeavisideKernel(0.005, Variant.CLAMPED)
    ref = HeavisideKernel(0.001, Variant.REFERENCE)
    assert ref.for_state() is ref


@given(reals, epsilons)
def test_complement_identity(r, eps):
    k = HeavisideKernel.smooth(eps)
    assert h_value(k, r) + h_value(k, -r) == 1.0


@given(reals, reals, epsilons)
def test_monotone(r1, r2, eps):
    k = HeavisideKernel.smooth(eps)
    lo, hi = sorted((r1, r2))
    assert h_value(k, lo) <= h_value(k, hi)
    # strict where the values are representable
    if hi - lo > 1e-9 and abs(hi) / eps < 30 and abs(lo) / eps < 30:
        assert h_value(k, lo) < h_value(k, hi)


@given(st.floats(min_value=-0.3, max_value=0.3), epsilons)
def test_derivative_positive_and_range(r, eps):
    k = HeavisideKernel.smooth(eps)
    assume(abs(r) / eps < 700)  # exp underflows beyond this
    assert h_derivative(k, r) > 0
    v = h_value(k, r)
    assert 0 <= v <= 1
    if abs(r) / eps < 30:
        assert 0 < v < 1


@given(st.floats(min_value=-0.05, max_value=0.05).filter(lambda r: abs(r) > 1e-4))
def test_derivative_fd_property(r):
    k = HeavisideKernel.smooth(0.01)
    step = 1e-7
    fd = (h_value(k, r + step) - h_value(k, r - step)) / (2 * step)
    assert fd == pytest.approx(h_derivative(k, r), rel=1e-6)


def test_saturation_values():
    R = SaturationR()
    assert r_value(R, 0.0) == 0.0
    assert r_value(R, math.log(2)) == pytest.approx(0.5, rel=1e-15)
    assert r_value(R, -math.log(2)) == pytest.approx(-0.5, rel=1e-15)
    assert SaturationR(3.0)(1e3) == 3.0


@given(reals, st.floats(min_value=0.1, max_value=10.0))
def test_saturation_odd_and_bounded(r, c):
    R = SaturationR(c)
    assert R(-r) == -R(r)
    assert np.sign(R(r)) == np.sign(r)
    assert r * R(r) >= 0
    assert -c <= R(r) <= c


@given(reals, reals)
def test_saturation_increasing(r1, r2):
    R = SaturationR()
    lo, hi = sorted((r1, r2))
    assert R(lo) <= R(hi)


def test_field_apply():
    m = cantilever().build_mesh((20, 10))
    k = HeavisideKernel.smooth(0.01)
    ones = field_apply(np.full(m.n_vertices, 10.0), k)
    assert np.all(np.abs(ones - 1.0) <= 1e-300 + np.finfo(float).eps)
    assert np.all(field_apply(np.zeros(m.n_vertices), k) == 0.5)
    g = m.vertices[:, 0] - 1.0
    h = field_apply(g, k)
    assert np.all(h[np.isclose(m.vertices[:, 0], 1.0)] == 0.5)
    order = np.argsort(m.vertices[:, 0], kind="stable")
    assert np.all(np.diff(h[order]) >= 0)
