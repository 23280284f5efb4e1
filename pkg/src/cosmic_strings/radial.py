"""Critical-coupling (a N = 1) coincident strings in the log radius t = ln r.

U(t) = u(e^t) solves U'' = h(U) with U' -> 2N as t -> -inf.  Near -inf the
deviation w = U - 2 N t is the fixed point of

    T(w)(t) = int_{-inf}^t (t - tau) h(2 N tau + w(tau)) dtau,

found by Picard iteration; from the matching point t0 the profile follows
the first integral U' = 2N sqrt(1 - exp((1/N)(1/m + U - e^{mU}/m))).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import CalibrationError, ConvergenceError, DomainError, RegimeError
from .model import PotentialModel, calibrate_g0, decay_exponent, h_eval, h_prime_eval

log = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3
SEED_SPAN = 40.0  # seed interval length in units of 1/(2 a N)
SWITCH_RADICAND = 1e-14
CLAMP_RADICAND = 1e-14
NEGATIVE_RADICAND = 1e-12


def _require_critical(model: PotentialModel):
    if model.N < 1:
        raise DomainError("the radial reduction needs N >= 1")
    if not model.is_critical:
        raise RegimeError(
            f"radial reduction requires a*N = 1, got a*N = {model.a * model.N:.6g}"
        )


def _calibration_log_ratio(model: PotentialModel) -> float:
    return math.log(model.g0 / calibrate_g0(model.N, model.m))


# ---------------------------------------------------------------- seed


@dataclass(frozen=True)
class SeedState:
    """Fixed point w = U - 2 N t sampled on [t_lo, t0]."""

    t: np.ndarray
    w_func: np.ndarray
    w_prime: np.ndarray
    t0: float
    contraction_bound: float
    picard_diffs: tuple = ()
    residual: float = 0.0

    N: int = 1

    @property
    def U(self) -> np.ndarray:
        return 2 * self.N * self.t + self.w_func


def contraction_constant(model: PotentialModel, t0: float) -> float:
    """C1 = sup |h'(U)| e^{-aU} over U <= 2 N t0 + 1."""
    top = 2 * model.N * t0 + 1.0
    U = np.linspace(top - 80.0, top, 8001)
    return float(np.max(np.abs(h_prime_eval(model, U)) * np.exp(-model.a * U)))


def contraction_estimate(model: PotentialModel, t0: float) -> float:
    """C1 int_{-inf}^{t0} (t0 - tau) e^{a(2N tau + 1)} dtau."""
    k = 2 * model.a * model.N
    return contraction_constant(model, t0) * math.exp(model.a + k * t0) / k**2


def self_map_estimate(model: PotentialModel, t0: float) -> float:
    """g0 int_{-inf}^{t0} (t0 - tau) e^{a(2N tau + 1)} dtau; T maps the unit ball to itself when <= 1."""
    k = 2 * model.a * model.N
    return model.g0 * math.exp(model.a + k * t0) / k**2


def admissible_t0(model: PotentialModel, bound: float = 0.5) -> float:
    """Largest t0 whose contraction estimate is <= ``bound`` (and T is a self-map)."""
    _require_critical(model)

    def ok(t):
        return contraction_estimate(model, t) <= bound and self_map_estimate(model, t) <= 1.0

    lo, hi = -200.0, 20.0
    if not ok(lo):
        raise ConvergenceError("no admissible matching point found above t = -200")
    if ok(hi):
        return hi
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return lo


def picard_map(model: PotentialModel, t: np.ndarray, w: np.ndarray):
    """Apply T on the sample grid ``t``; returns (T(w), T(w)')."""
    integrand = h_eval(model, 2 * model.N * t + w)
    dw = cumulative_simpson(integrand, x=t, initial=0.0)
    return cumulative_simpson(dw, x=t, initial=0.0), dw


def fixed_point_seed(
    model: PotentialModel,
    t0: Optional[float] = None,
    tol: float = 1e-13,
    step: float = DEFAULT_STEP,
    max_iter: int = 200,
) -> SeedState:
    """Picard iteration from w = 0 on [t0 - 40/(2aN), t0]."""
    _require_critical(model)
    if t0 is None:
        t0 = admissible_t0(model)
    rho = contraction_estimate(model, t0)
    if rho >= 1.0:
        raise DomainError(
            f"contraction estimate {rho:.3g} >= 1 at t0 = {t0:g}; "
            f"admissible threshold is t0 <= {admissible_t0(model):.6g}"
        )
    span = SEED_SPAN / (2 * model.a * model.N)
    n = max(int(math.ceil(span / step)), 8)
    t = np.linspace(t0 - span, t0, n + 1)
    w = np.zeros_like(t)
    diffs = []
    for _ in range(max_iter):
        new, dw = picard_map(model, t, w)
        diffs.append(float(np.max(np.abs(new - w))))
        w = new
        if diffs[-1] <= tol:
            break
    else:
        raise ConvergenceError(
            f"Picard iteration did not reach tol={tol:g} in {max_iter} steps", history=diffs
        )
    if np.max(np.abs(w)) > 1.0:
        raise ConvergenceError("seed left the unit ball sup|w| <= 1")
    final, dw = picard_map(model, t, w)
    seed = SeedState(t, final, dw, float(t0), float(rho), tuple(diffs),
                     float(np.max(np.abs(final - w))), N=model.N)
    return seed


# ---------------------------------------------------------------- march


@dataclass(frozen=True)
class RadialProfile:
    t_samples: np.ndarray
    U_samples: np.ndarray
    Uprime_samples: np.ndarray
    t0: float
    model: PotentialModel
    switch_t: Optional[float] = None
    seed: Optional[SeedState] = field(default=None, repr=False)

    def march_mask(self) -> np.ndarray:
        return self.t_samples >= self.t0


def radicand(model: PotentialModel, U):
    """1 - (g0 / (2 a N^2)) e^{a(U - e^{mU}/m)}, computed without cancellation.

    Equals 1 - exp((1/N)(1/m + U - e^{mU}/m)) when g0 is calibrated.
    """
    U = np.asarray(U, dtype=float)
    x = model.a * (U - np.expm1(model.m * U) / model.m) + _calibration_log_ratio(model)
    return -np.expm1(x)


def _speed(model: PotentialModel, U: float, shift: float) -> float:
    r = -math.expm1(model.a * (U - math.expm1(model.m * U) / model.m) + shift)
    if r < -NEGATIVE_RADICAND:
        raise CalibrationError(
            f"negative radicand {r:.3e} at U={U:.6g}: g0 inconsistent with the calibration"
        )
    return 2 * model.N * math.sqrt(max(r, 0.0))


def first_integral_march(
    model: PotentialModel,
    seed: SeedState,
    t_end: float,
    step: float = DEFAULT_STEP,
    include_seed: bool = True,
) -> RadialProfile:
    """RK4 march of U' = sqrt(F(U)) from the seed's matching point to ``t_end``.

    Once the radicand drops below 1e-14 the profile continues with the
    linearized solution U_s exp(-sqrt(2Nm)(t - t_s)).
    """
    _require_critical(model)
    if not step > 0:
        raise DomainError("step must be positive")
    if abs(_calibration_log_ratio(model)) > 1e-12:
        raise CalibrationError(
            f"g0 = {model.g0!r} differs from the calibrated {calibrate_g0(model.N, model.m)!r}"
        )
    if t_end <= seed.t0:
        raise DomainError("t_end must exceed the matching point t0")
    n = int(math.ceil((t_end - seed.t0) / step))
    dt = (t_end - seed.t0) / n
    ts = seed.t0 + dt * np.arange(n + 1)
    Us = np.empty(n + 1)
    Ps = np.empty(n + 1)
    U = float(2 * model.N * seed.t0 + seed.w_func[-1])
    k = decay_exponent(model.N, model.m)
    switch_t = None
    shift = _calibration_log_ratio(model)
    f = lambda x: _speed(model, x, shift)
    for i in range(n + 1):
        if switch_t is None and (U >= 0.0 or float(radicand(model, U)) < SWITCH_RADICAND):
            switch_t = float(ts[i])
            U_s = U
        if switch_t is not None:
            Us[i] = U_s * math.exp(-k * (ts[i] - switch_t))
            Ps[i] = -k * Us[i]
            continue
        Us[i] = U
        Ps[i] = f(U)
        if i == n:
            break
        k1 = Ps[i]
        k2 = f(U + 0.5 * dt * k1)
        k3 = f(U + 0.5 * dt * k2)
        k4 = f(U + dt * k3)
        U = U + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if U >= 0.0:
            U = min(U, -1e-300)
    if include_seed:
        t_all = np.concatenate([seed.t[:-1], ts])
        U_all = np.concatenate([2 * model.N * seed.t[:-1] + seed.w_func[:-1], Us])
        P_all = np.concatenate([2 * model.N + seed.w_prime[:-1], Ps])
    else:
        t_all, U_all, P_all = ts, Us, Ps
    return RadialProfile(t_all, U_all, P_all, seed.t0, model, switch_t, seed)


def second_order_march(model: PotentialModel, U0: float, P0: float, t0: float, t_end: float,
                       rtol: float = 1e-13, atol: float = 1e-15, t_eval=None):
    """Direct integration of U'' = h(U) as a first-order system (DOP853).

    Independent check of the first-integral march; note that the trajectory
    is the stable manifold of a saddle, so forward integration departs from
    it once |U| is small (perturbations grow like e^{sqrt(2Nm) t}).
    """
    from scipy.integrate import solve_ivp

    sol = solve_ivp(
        lambda t, y: (y[1], float(h_eval(model, y[0]))),
        (t0, t_end), (U0, P0), method="DOP853", rtol=rtol, atol=atol,
        t_eval=t_eval, dense_output=t_eval is None,
    )
    if not sol.success:
        raise ConvergenceError(f"second-order march failed: {sol.message}")
    return sol


def oracle_comparison(
    model: PotentialModel,
    span: float = 20.0,
    end_amplitude: float = 1e-4,
    step: float = DEFAULT_STEP,
) -> dict:
    """Sup-norm gap between the first-integral and second-order marches.

    Both start from one seed and cover ``span`` units of t, placed so the
    interval ends where |U| reaches ``end_amplitude``: beyond that the
    forward second-order march leaves the saddle's stable manifold and
    measures its own instability rather than the first-integral march.
    """
    ref = solve_radial(model, step=step)
    idx = np.nonzero(np.abs(ref.U_samples) <= end_amplitude)[0]
    if idx.size == 0:
        raise DomainError(f"profile never reaches |U| <= {end_amplitude:g}")
    t_start = float(ref.t_samples[idx[0]]) - span
    seed = fixed_point_seed(model, t0=t_start, step=step)
    prof = first_integral_march(model, seed, t_start + span, step, include_seed=False)
    P0 = 2 * model.N + float(seed.w_prime[-1])
    sol = second_order_march(model, float(prof.U_samples[0]), P0, t_start, t_start + span,
                             t_eval=prof.t_samples)
    gap = np.abs(sol.y[0] - prof.U_samples)
    return {"t0": t_start, "t_end": t_start + span, "sup_diff": float(gap.max()),
            "sup_diff_Uprime": float(np.max(np.abs(sol.y[1] - prof.Uprime_samples)))}


def solve_radial(
    model: PotentialModel,
    t_end: Optional[float] = None,
    step: float = DEFAULT_STEP,
    t0: Optional[float] = None,
    tol: float = 1e-13,
) -> RadialProfile:
    """Seed plus first-integral march; ``t_end`` defaults to t0 + 40."""
    seed = fixed_point_seed(model, t0=t0, tol=tol, step=step)
    if t_end is None:
        t_end = seed.t0 + 40.0
    return first_integral_march(model, seed, t_end, step)


# ---------------------------------------------------------------- diagnostics


def _second_difference(t, U):
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return 2.0 * (h1 * U[2:] - (h1 + h2) * U[1:-1] + h2 * U[:-2]) / (h1 * h2 * (h1 + h2))


def verify_ode_residual(model: PotentialModel, profile: RadialProfile, t_range=None) -> float:
    """max over interior samples of |second difference of U - h(U)|."""
    t, U = profile.t_samples, profile.U_samples
    if len(t) < 3:
        raise DomainError("need at least 3 samples")
    r = np.abs(_second_difference(t, U) - h_eval(model, U[1:-1]))
    if t_range is not None:
        mask = (t[1:-1] >= t_range[0]) & (t[1:-1] <= t_range[1])
        r = r[mask]
    return float(np.max(r)) if r.size else 0.0


def conservation_error(model: PotentialModel, profile: RadialProfile) -> float:
    """sup |U'^2 - F(U)| with F the first integral."""
    from .model import first_integral_eval

    F = first_integral_eval(model, profile.U_samples)
    return float(np.max(np.abs(profile.Uprime_samples**2 - F)))


class DecayFit(NamedTuple):
    rate: float
    r_squared: float
    ratio: float  # -U'/U at the window midpoint


def amplitude_window(profile: RadialProfile, hi: float = 1e-2, lo: float = 1e-6):
    """t-interval on which lo <= |U| <= hi (U increasing, so one interval)."""
    a = np.abs(profile.U_samples)
    idx = np.nonzero((a <= hi) & (a >= lo))[0]
    if idx.size < 2:
        raise DomainError(f"profile never enters {lo:g} <= |U| <= {hi:g}")
    return float(profile.t_samples[idx[0]]), float(profile.t_samples[idx[-1]])


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return coef, 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def extract_decay(profile: RadialProfile, fit_window) -> DecayFit:
    """Negated least-squares slope of ln|U| against t over ``fit_window``."""
    t_lo, t_hi = fit_window
    t, U = profile.t_samples, profile.U_samples
    if t_lo < t[0] or t_hi > t[-1] or t_lo >= t_hi:
        raise DomainError(f"window {fit_window} outside profile range [{t[0]:g}, {t[-1]:g}]")
    mask = (t >= t_lo) & (t <= t_hi)
    if np.any(U[mask] >= 0):
        raise DomainError("U must be negative throughout the fit window")
    if np.any(np.abs(U[mask]) >= 0.1):
        log.warning("|U| >= 0.1 inside the fit window; not in the linearized regime")
    (slope, _), r2 = _linfit(t[mask], np.log(np.abs(U[mask])))
    mid = 0.5 * (t_lo + t_hi)
    i = int(np.argmin(np.abs(t - mid)))
    ratio = float(-profile.Uprime_samples[i] / U[i])
    return DecayFit(-float(slope), float(r2), ratio)


@dataclass(frozen=True)
class RadialField:
    r: np.ndarray
    u: np.ndarray
    u_r: np.ndarray


def to_radial_field(profile: RadialProfile) -> RadialField:
    """u(r) = U(ln r) and u_r = U'(ln r) / r on r = e^t."""
    r = np.exp(profile.t_samples)
    return RadialField(r, profile.U_samples.copy(), profile.Uprime_samples / r)


def gradient_decay_slope(profile: RadialProfile, fit_window) -> tuple[float, float]:
    """Slope of ln|u_r| against ln r over a t-window (and its r^2)."""
    t = profile.t_samples
    mask = (t >= fit_window[0]) & (t <= fit_window[1])
    rf = to_radial_field(profile)
    (slope, _), r2 = _linfit(np.log(rf.r[mask]), np.log(np.abs(rf.u_r[mask])))
    return float(slope), float(r2)
