from fractions import Fraction
from math import factorial, pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nslet.geometry import ball_rule
from nslet.specialfn import erf, gaussian_exp, heat_kernel, heaviside


def erf_taylor(x, terms=60):
    """Independent oracle: Maclaurin series summed in exact rationals."""
    x = Fraction(x)
    s = Fraction(0)
    for n in range(terms):
        s += Fraction((-1) ** n, factorial(n) * (2 * n + 1)) * x ** (2 * n + 1)
    return float(s) * 2 / sqrt(pi)


def test_erf_oracle_value():
    assert erf_taylor(1) == pytest.approx(0.842700792949715, abs=1e-15)
    assert abs(erf(1.0) - 0.842700792949715) <= 1e-14


@pytest.mark.parametrize("x", [0.0, 0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
def test_erf_matches_series(x):
    assert abs(erf(x) - erf_taylor(x, terms=90)) <= 1e-14


def test_erf_zero_and_bounds():
    assert erf(0.0) == 0.0
    assert erf(40.0) == 1.0
    assert np.all(np.abs(erf(np.linspace(-30, 30, 1001))) <= 1.0)


@pytest.mark.parametrize("x", [0.3, 1.7, 4.0])
def test_erf_odd(x):
    assert erf(x) == -erf(-x)


def test_erf_odd_random_and_monotone(rng):
    x = rng.uniform(-6, 6, 1000)
    assert np.max(np.abs(erf(x) + erf(-x))) <= 1e-15
    xs = np.sort(x)
    assert np.all(np.diff(erf(xs)) >= 0)


@given(st.floats(-6, 6), st.floats(-6, 6))
def test_erf_monotone_property(a, b):
    lo, hi = min(a, b), max(a, b)
    assert erf(lo) <= erf(hi)


def test_heaviside_convention():
    assert heaviside(0.0) == 0.0
    assert heaviside(1e-300) == 1.0
    assert heaviside(-1.0) == 0.0


def test_gaussian_exp_clamps():
    assert gaussian_exp(-746.0) == 0.0
    assert gaussian_exp(-1.0) == pytest.approx(np.exp(-1.0), rel=1e-15)


def test_heat_kernel_examples():
    assert heat_kernel(0.0, 1 / (4 * np.pi), 1.0) == pytest.approx(1.0, rel=1e-14)
    assert heat_kernel(3.0, -1.0, 1.0) == 0.0
    assert heat_kernel(3.0, 0.0, 1.0) == 0.0
    assert heat_kernel(2.0, 1.0, 1.0) == pytest.approx(np.exp(-1) * (4 * np.pi) ** -1.5, rel=1e-14)


def test_heat_kernel_underflows_cleanly():
    assert heat_kernel(1.0, 1e-6, 1.0) == 0.0


def ball_mass(eta):
    """Exact heat-kernel mass inside R = eta * sqrt(4 nu tau)."""
    return erf(eta) - 2 * eta / sqrt(pi) * np.exp(-(eta**2))


@pytest.mark.parametrize("nu,tau", [(1.0, 1.0), (0.01, 2.0), (3.0, 0.1)])
def test_heat_kernel_ball_mass(nu, tau):
    # at R = 8 sqrt(nu tau) the boundary sits at eta = 4 and the exterior mass is 5.2e-7
    R = 8 * np.sqrt(nu * tau)
    rule = ball_rule(R, 32)
    mass = rule.integrate(heat_kernel(np.linalg.norm(rule.x, axis=1), tau, nu))
    assert abs(mass - ball_mass(4.0)) <= 1e-8


@pytest.mark.parametrize("nu,tau", [(1.0, 1.0), (0.01, 2.0), (3.0, 0.1)])
def test_heat_kernel_normalised(nu, tau):
    R = 12 * np.sqrt(nu * tau)
    rule = ball_rule(R, 40)
    assert abs(rule.integrate(heat_kernel(np.linalg.norm(rule.x, axis=1), tau, nu)) - 1) <= 1e-8


def test_heat_equation_fd(rng):
    worst = 0.0
    for _ in range(100):
        nu = rng.uniform(0.1, 2.0)
        tau = rng.uniform(0.1, 2.0)
        x = rng.normal(size=3) * np.sqrt(2 * nu * tau)
        h = 1e-4 * np.sqrt(nu * tau)

        def K(y, t):
            return heat_kernel(np.linalg.norm(y), t, nu)

        dt = (K(x, tau + h) - K(x, tau - h)) / (2 * h)
        lap = sum(
            (K(x + h * e, tau) - 2 * K(x, tau) + K(x - h * e, tau)) / h**2 for e in np.eye(3)
        )
        worst = max(worst, abs(dt - nu * lap) / abs(dt))
    assert worst <= 1e-5
