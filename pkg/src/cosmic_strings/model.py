"""Potential family w(s) = 1 - s**m and the scalar functions derived from it.

All evaluators accept scalars or numpy arrays and broadcast.  ``a`` is the
gravitational block 8*pi*G; ``N`` is the total string number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, RegimeError

# Largest argument of exp() that does not overflow a double.
_EXP_MAX = 709.0


@dataclass(frozen=True)
class PotentialModel:
    N: int
    m: float
    a: float
    g0: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise DomainError(f"N must be a nonnegative integer, got {self.N!r}")
        if not self.m > 0:
            raise DomainError(f"m must be positive, got {self.m!r}")
        if not self.a >= 0:
            raise DomainError(f"a = 8*pi*G must be nonnegative, got {self.a!r}")
        if not self.g0 > 0:
            raise DomainError(f"g0 must be positive, got {self.g0!r}")
        if self.a * self.N > 1.0 + 1e-12:
            raise RegimeError(
                f"a*N = {self.a * self.N:.6g} > 1 lies outside the existence regime a*N <= 1"
            )

    @classmethod
    def critical(cls, N: int, m: float) -> "PotentialModel":
        """Critical coupling a*N = 1 with the calibrated g0."""
        return cls(N=N, m=m, a=1.0 / N, g0=calibrate_g0(N, m))

    @property
    def G(self) -> float:
        return self.a / (8.0 * math.pi)

    @property
    def is_critical(self) -> bool:
        return abs(self.a * self.N - 1.0) <= 1e-12

    def with_g0(self, g0: float) -> "PotentialModel":
        return replace(self, g0=g0)

    # convenience bound methods
    def w(self, s):
        return w_eval(self, s)

    def f(self, s):
        return f_eval(self, s)

    def g_int(self, s):
        return g_int_eval(self, s)

    def h(self, U):
        return h_eval(self, U)

    def h_prime(self, U):
        return h_prime_eval(self, U)

    def first_integral(self, U):
        return first_integral_eval(self, U)


def _as_nonneg(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(~np.isfinite(s)):
        raise DomainError("argument s must be finite and nonnegative")
    return s


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def w_eval(model: PotentialModel, s):
    s = _as_nonneg(s)
    return _scalar_or_array(1.0 - s**model.m)


def f_eval(model: PotentialModel, s):
    """Coupling f with -f(s) s = w(s) - 1, i.e. s**(m-1)."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(~np.isfinite(s)):
        raise DomainError("f(s) requires s > 0")
    return _scalar_or_array(s ** (model.m - 1.0))


def g_int_eval(model: PotentialModel, s):
    """Antiderivative of f from 0, s**m / m."""
    s = _as_nonneg(s)
    return _scalar_or_array(s**model.m / model.m)


def _check_U(U):
    U = np.asarray(U, dtype=float)
    if np.any(~np.isfinite(U)):
        raise DomainError("U must be finite")
    return U


def _log_weight(model: PotentialModel, U):
    """log of exp(a U - (a/m) e^{mU}); -inf once e^{mU} would overflow."""
    mU = model.m * U
    big = mU > _EXP_MAX
    s = np.exp(np.where(big, 0.0, mU))
    out = model.a * U - (model.a / model.m) * s
    if model.a > 0:
        out = np.where(big, -np.inf, out)
    return out, s, big


def h_eval(model: PotentialModel, U):
    """Radial nonlinearity g0 e^{aU - (a/m)e^{mU}} (e^{mU} - 1)."""
    U = _check_U(U)
    logw, _, big = _log_weight(model, U)
    em1 = np.expm1(np.where(big, 0.0, model.m * U))
    with np.errstate(over="ignore"):
        val = model.g0 * np.exp(logw) * em1
        if model.a == 0:
            # no suppression without gravity: the plain exponential overflows
            val = np.where(big, np.inf, val)
    return _scalar_or_array(val)


def h_prime_eval(model: PotentialModel, U):
    """Derivative of h: g0 e^{aU - (a/m)e^{mU}} (m e^{mU} - a (e^{mU}-1)^2)."""
    U = _check_U(U)
    logw, s, big = _log_weight(model, U)
    em1 = np.expm1(np.where(big, 0.0, model.m * U))
    with np.errstate(over="ignore", invalid="ignore"):
        val = model.g0 * np.exp(logw) * (model.m * s - model.a * em1**2)
        if model.a == 0:
            val = np.where(big, np.inf, val)
        else:
            val = np.where(big, 0.0, val)
    return _scalar_or_array(val)


def first_integral_eval(model: PotentialModel, U):
    """F(U) = 4N^2 - (2 g0 / a) exp(a (U - e^{mU}/m)), the conserved (U')^2."""
    if model.a <= 0:
        raise RegimeError("the first integral needs a > 0 (gravitational coupling)")
    U = _check_U(U)
    logw, _, _ = _log_weight(model, U)
    return _scalar_or_array(4.0 * model.N**2 - (2.0 * model.g0 / model.a) * np.exp(logw))


def first_integral_derivative(model: PotentialModel, U):
    """F'(U) = 2 g0 (e^{mU} - 1) e^{a(U - e^{mU}/m)}."""
    return _scalar_or_array(2.0 * np.asarray(h_eval(model, U)))


def calibrate_g0(N: int, m: float) -> float:
    """g0 = 2 N exp(1/(m N)), the value making U = 0 the degenerate equilibrium at a*N = 1."""
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    if not m > 0:
        raise DomainError(f"m must be positive, got {m!r}")
    return 2.0 * N * math.exp(1.0 / (m * N))


def decay_exponent(N: int, m: float) -> float:
    """Sharp far-field rate sqrt(2 N m) of the critical radial solution."""
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    if not m > 0:
        raise DomainError(f"m must be positive, got {m!r}")
    return math.sqrt(2.0 * N * m)


def flat_decay_exponent(model: PotentialModel) -> float:
    """Linearized decay rate sqrt(g0 m) used on the a = 0 path."""
    return math.sqrt(model.g0 * model.m)
