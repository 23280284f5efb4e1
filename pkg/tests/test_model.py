import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from cosmic_strings.errors import DomainError, RegimeError
from cosmic_strings.model import (
    PotentialModel,
    calibrate_g0,
    decay_exponent,
    f_eval,
    first_integral_derivative,
    first_integral_eval,
    flat_decay_exponent,
    g_int_eval,
    h_eval,
    h_prime_eval,
    w_eval,
)


def test_w_values():
    model = PotentialModel(1, 2.0, 0.5, 1.0)
    assert w_eval(model, 1.0) == 0.0
    assert w_eval(model, 0.0) == 1.0
    assert w_eval(model, 2.0) == pytest.approx(-3.0)


def test_f_requires_positive_s():
    model = PotentialModel(1, 2.0, 0.5, 1.0)
    with pytest.raises(DomainError):
        f_eval(model, 0.0)
    # -f(s) s = w(s) - 1
    s = np.linspace(0.1, 3, 7)
    assert np.allclose(-f_eval(model, s) * s, w_eval(model, s) - 1)


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 3.7])
def test_g_int_is_antiderivative_by_quadrature(m):
    model = PotentialModel(1, m, 0.0, 1.0)
    for s in (0.3, 1.0, 2.5):
        ref, _ = quad(lambda x: x ** (m - 1.0), 0.0, s, epsabs=1e-14, epsrel=1e-13)
        assert g_int_eval(model, s) == pytest.approx(ref, rel=1e-10)


def test_h_sign_and_zero():
    model = PotentialModel.critical(1, 1.0)
    assert h_eval(model, 0.0) == 0.0
    assert np.all(h_eval(model, np.linspace(-10, -1e-3, 50)) < 0)
    assert np.all(h_eval(model, np.linspace(1e-3, 2, 50)) > 0)


def test_h_overflow_guard():
    model = PotentialModel.critical(1, 1.0)
    assert h_eval(model, 800.0) == 0.0
    assert math.isfinite(h_prime_eval(model, 800.0))
    flat = PotentialModel(1, 1.0, 0.0, 1.0)
    assert h_eval(flat, 800.0) == math.inf


@pytest.mark.parametrize("N,m,a,g0", [(1, 1.0, 1.0, 2 * math.e), (2, 1.0, 0.5, 3.0),
                                      (1, 4.0, 0.3, 7.0), (3, 0.5, 0.2, 1.5), (2, 3.0, 0.45, 0.8)])
def test_h_prime_matches_central_differences(N, m, a, g0):
    model = PotentialModel(N, m, a, g0)
    U = np.linspace(-10, 1, 221)
    eps = 1e-6
    fd = (h_eval(model, U + eps) - h_eval(model, U - eps)) / (2 * eps)
    exact = h_prime_eval(model, U)
    scale = np.maximum(np.abs(exact), 1e-8 * np.max(np.abs(exact)))
    assert np.max(np.abs(fd - exact) / scale) < 1e-5


def test_h_prime_flat_matches_central_differences():
    # without gravity h -> -g0 for U << 0, so differences cancel; stay where h' is O(1)
    model = PotentialModel(1, 2.0, 0.0, 1.0)
    U = np.linspace(-3, 1, 81)
    eps = 1e-6
    fd = (h_eval(model, U + eps) - h_eval(model, U - eps)) / (2 * eps)
    assert np.allclose(fd, h_prime_eval(model, U), rtol=1e-6)


@pytest.mark.parametrize("N,m", [(1, 1.0), (2, 1.0), (1, 2.0), (3, 0.5)])
def test_calibration_root_of_first_integral(N, m):
    """g0 from an independent root find of F(0; g0) = 0."""
    a = 1.0 / N
    F0 = lambda g0: first_integral_eval(PotentialModel(N, m, a, g0), 0.0)
    root = brentq(F0, 1e-3, 1e3, xtol=1e-14, rtol=1e-15)
    assert calibrate_g0(N, m) == pytest.approx(root, rel=1e-12)
    assert abs(first_integral_eval(PotentialModel.critical(N, m), 0.0)) <= 1e-12 * 4 * N * N


def test_calibrate_example():
    assert calibrate_g0(1, 1.0) == pytest.approx(2 * math.e, rel=1e-15)


def test_first_integral_requires_gravity():
    with pytest.raises(RegimeError):
        first_integral_eval(PotentialModel(1, 1.0, 0.0, 1.0), -1.0)


def test_first_integral_derivative_matches_fd():
    model = PotentialModel.critical(2, 1.5)
    U = np.linspace(-6, 0.5, 40)
    eps = 1e-6
    fd = (first_integral_eval(model, U + eps) - first_integral_eval(model, U - eps)) / (2 * eps)
    assert np.allclose(first_integral_derivative(model, U), fd, rtol=1e-6, atol=1e-9)


def test_first_integral_limit_and_range():
    model = PotentialModel.critical(1, 1.0)
    assert first_integral_eval(model, -60.0) == pytest.approx(4.0, rel=1e-12)
    U = np.linspace(-30, -1e-6, 100)
    F = first_integral_eval(model, U)
    assert np.all(F > 0) and np.all(F <= 4.0)


def test_regime_and_domain_validation():
    with pytest.raises(RegimeError):
        PotentialModel(3, 1.0, 0.5, 1.0)
    with pytest.raises(DomainError):
        PotentialModel(1, 0.0, 0.5, 1.0)
    with pytest.raises(DomainError):
        PotentialModel(1, 1.0, -0.1, 1.0)
    with pytest.raises(DomainError):
        PotentialModel(1, 1.0, 0.1, 0.0)
    with pytest.raises(DomainError):
        calibrate_g0(0, 1.0)


def test_decay_exponents():
    assert decay_exponent(1, 1.0) == pytest.approx(math.sqrt(2))
    assert decay_exponent(2, 1.0) == pytest.approx(2.0)
    assert flat_decay_exponent(PotentialModel(1, 1.0, 0.0, 1.0)) == 1.0


def test_G_property():
    model = PotentialModel(1, 1.0, 0.5, 1.0)
    assert model.G == pytest.approx(0.5 / (8 * math.pi))


@settings(max_examples=60, deadline=None)
@given(N=st.integers(1, 6), m=st.floats(0.2, 5.0))
def test_calibrated_equilibrium_is_degenerate(N, m):
    """At the calibrated coupling U = 0 is a double root of F."""
    model = PotentialModel.critical(N, m)
    assert abs(first_integral_eval(model, 0.0)) <= 1e-11 * 4 * N * N
    assert first_integral_derivative(model, 0.0) == 0.0


@settings(max_examples=60, deadline=None)
@given(U=st.floats(-20, -1e-3), m=st.floats(0.3, 4.0))
def test_h_negative_below_zero(U, m):
    assert h_eval(PotentialModel(1, m, 0.7, 2.0), U) < 0
