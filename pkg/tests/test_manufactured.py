import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from benchmark.manufactured import (
    DOMAIN,
    T_POLE,
    ManufacturedBeam,
    ManufacturedCase,
    alpha,
    manufactured_beam,
    manufactured_source,
    radius,
)
from physics.stefan_nitsche import MaterialParams

CASE = ManufacturedCase()
times = st.floats(min_value=0.0, max_value=0.6, allow_nan=False)
angles = st.floats(min_value=0.0, max_value=2 * np.pi, allow_nan=False)


def _symbolic(material: MaterialParams):
    x, y, t = sympy.symbols("x y t", real=True)
    a = 3 / (2 - 3 * t)
    R = sympy.log(a)
    r = sympy.sqrt(x ** 2 + y ** 2)
    T = -sympy.exp(r) + sympy.cos(sympy.pi * r / (2 * R)) + a + material.T_m
    source = material.rho * material.c * sympy.diff(T, t) - material.k * (sympy.diff(T, x, 2) + sympy.diff(T, y, 2))
    grad = [sympy.diff(T, x), sympy.diff(T, y)]
    return sympy.lambdify((x, y, t), source, "numpy"), sympy.lambdify((x, y, t), grad, "numpy")


def _points(n=25, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.4, 1.4, (n, 2))


def test_hole_starts_small_and_speeds_up():
    assert radius(0.0) == pytest.approx(np.log(1.5))
    assert alpha(0.5) == pytest.approx(6.0)
    assert T_POLE == pytest.approx(2.0 / 3.0)
    with pytest.raises(ValueError):
        alpha(T_POLE)
    assert DOMAIN == (-1.5, 1.5, -1.5, 1.5)


@settings(max_examples=50, deadline=None)
@given(times, angles)
def test_interface_sits_at_the_melting_temperature(t, angle):
    R = float(radius(t))
    x = np.array([[R * np.cos(angle), R * np.sin(angle)]])
    assert CASE.temperature(x, t)[0] == pytest.approx(CASE.material.T_m, abs=1e-12)
    assert CASE.level_set(x, t)[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("material", [MaterialParams(T_m=-0.01), MaterialParams(rho=2.0, c=0.5, k=3.0, L=4.0)])
def test_source_and_gradient_match_symbolic_derivatives(material):
    case = ManufacturedCase(material)
    source, grad = _symbolic(material)
    p = _points()
    for t in (0.0, 0.3):
        np.testing.assert_allclose(case.source(p, t), source(p[:, 0], p[:, 1], t), rtol=1e-9, atol=1e-9)
        g = np.stack(grad(p[:, 0], p[:, 1], t), axis=1)
        np.testing.assert_allclose(case.temperature_gradient(p, t), g, rtol=1e-9, atol=1e-9)


def test_initial_beam_amplitude():
    assert CASE.beam_amplitude(0.0) == pytest.approx(-6.874, abs=1e-3)


@settings(max_examples=50, deadline=None)
@given(times, angles)
def test_stefan_balance_on_the_interface(t, angle):
    m = CASE.material
    R = float(radius(t))
    x = np.array([[R * np.cos(angle), R * np.sin(angle)]])
    n = CASE.normal(x)
    conduction = m.k * np.einsum("ij,ij->i", CASE.temperature_gradient(x, t), n)
    beam = np.einsum("ij,ij->i", CASE.beam(x, t), n)
    assert (conduction - beam)[0] == pytest.approx(m.rho * m.L * CASE.normal_speed(t), rel=1e-10)


def test_fields_are_rotation_invariant():
    p = _points(10, seed=4)
    c, s = np.cos(0.7), np.sin(0.7)
    q = p @ np.array([[c, -s], [s, c]]).T
    for fn in (CASE.temperature, CASE.source, CASE.level_set):
        np.testing.assert_allclose(fn(q, 0.2), fn(p, 0.2), rtol=1e-12, atol=1e-12)


def test_beam_helpers_agree():
    p = _points(5, seed=1)
    beam = ManufacturedBeam(CASE)
    np.testing.assert_allclose(beam.flux(p, 0.1, np.zeros_like(p)), manufactured_beam(p, 0.1))
    np.testing.assert_allclose(manufactured_source(p, 0.1), CASE.source(p, 0.1))


def test_origin_is_rejected():
    with pytest.raises(ValueError):
        CASE.temperature(np.zeros((1, 2)), 0.0)
