"""Planar multi-string solver: monotone iteration on a truncated square.

The unknown is v = u - u0^delta.  On the uniform Cartesian grid the discrete
problem is

    Lap_h v = g0 W e^{a v} e^{-(a/m) s} (s - 1) + g_h,     s = e^{m (u0^delta + v)},

with W = prod (1 + |x-p_s|^2)^(-a n_s) (equal to e^{a u0^delta} F_delta) and
Dirichlet data u = 0 on the boundary.  At nodes at least LIFT_RADIUS from
every center the source is g_h = max(g, -Lap_h u0^delta), an O(h^2) change
that makes -u0^delta a discrete supersolution there; closer to the centers
g_h = g, because for delta << h^2 the discrete Laplacian of u0^delta carries
negative lobes of O(1) mass that must not enter the source.  Iterates
descend from -u0^delta through

    (Lap_h - K) v_{k+1} = rhs(v_k) - K v_k,

where K(x) = g0 m e^{-a/m} F_delta(x) bounds d(rhs)/dv over the bracket.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .background import (
    RegularizationParam,
    StringConfiguration,
    F_delta_eval,
    source_g_eval,
    u0_delta_eval,
    u0_eval,
    weight_eval,
)
from .errors import BracketError, ConvergenceError, DomainError, RegimeError
from .model import PotentialModel

log = logging.getLogger(__name__)

MAX_ITER = 500
DEFAULT_TOL = 1e-8
# Round-off allowance for the nodewise bracket and monotonicity checks.
ROUND_TOL = 1e-12
NODE_CLEARANCE = 1e-9
# The source is lifted to -Lap_h u0^delta only this far from every center.
LIFT_RADIUS = 1.0


def default_schedule(stages: int = 20) -> list[float]:
    """Geometric schedule delta_k = 2^{-k-1}, k = 0..stages-1."""
    return [2.0 ** (-k - 1) for k in range(stages)]


@dataclass(frozen=True)
class Grid:
    """Uniform n x n grid on [-R, R]^2, or its cell-centered shift.

    When a string center lies within ``NODE_CLEARANCE`` of a node the grid
    is moved by half a spacing: the shifted grid consists of the n - 1 cell
    centers of the unshifted one, so spacing and symmetry about the origin
    are kept.
    """

    R: float
    n: int
    shifted: bool = False

    def __post_init__(self):
        if not self.R > 0:
            raise DomainError("truncation radius must be positive")
        if self.n < 5:
            raise DomainError("need at least 5 nodes per axis")

    @classmethod
    def build(cls, R: float, n: int, cfg: Optional[StringConfiguration] = None) -> "Grid":
        grid = cls(R, n, False)
        if cfg is None or cfg.n_distinct == 0:
            return grid
        if cfg.extent > R / 2:
            raise DomainError(
                f"centers extend to {cfg.extent:.4g}; need R >= {2 * cfg.extent:.4g}"
            )
        if grid.min_center_clearance(cfg) < NODE_CLEARANCE:
            grid = cls(R, n, True)
            if grid.min_center_clearance(cfg) < NODE_CLEARANCE:
                raise DomainError("no grid offset keeps the nodes off the string centers")
        return grid

    @property
    def spacing(self) -> float:
        return 2 * self.R / (self.n - 1)

    @property
    def size(self) -> int:
        """Nodes per axis actually used."""
        return self.n - 1 if self.shifted else self.n

    @property
    def axis(self) -> np.ndarray:
        h = self.spacing
        off = 0.5 * h if self.shifted else 0.0
        return -self.R + off + h * np.arange(self.size)

    def points(self) -> np.ndarray:
        xs = self.axis
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        return np.stack([X, Y], axis=-1)

    @property
    def radius(self) -> np.ndarray:
        P = self.points()
        return np.hypot(P[..., 0], P[..., 1])

    def min_center_clearance(self, cfg: StringConfiguration) -> float:
        if cfg.n_distinct == 0:
            return math.inf
        xs = self.axis
        h = self.spacing
        worst = math.inf
        for (px, py), _ in cfg.centers:
            ix = np.clip(np.round((px - xs[0]) / h), 0, self.size - 1)
            iy = np.clip(np.round((py - xs[0]) / h), 0, self.size - 1)
            worst = min(worst, math.hypot(xs[0] + ix * h - px, xs[0] + iy * h - py))
        return worst

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros((self.size, self.size), dtype=bool)
        mask[1:-1, 1:-1] = True
        return mask


def laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """Five-point Laplacian on interior nodes; NaN on the boundary ring."""
    out = np.full(values.shape, np.nan)
    out[1:-1, 1:-1] = (
        values[2:, 1:-1] + values[:-2, 1:-1] + values[1:-1, 2:] + values[1:-1, :-2]
        - 4.0 * values[1:-1, 1:-1]
    ) / h**2
    return out


def _laplacian_matrix(m: int, h: float) -> sp.csc_matrix:
    """Dirichlet five-point Laplacian for an m x m block of interior unknowns."""
    e = np.ones(m)
    T = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1])
    eye = sp.identity(m)
    return ((sp.kron(T, eye) + sp.kron(eye, T)) / h**2).tocsc()


def _boundary_term(values: np.ndarray, h: float) -> np.ndarray:
    """Contribution of the boundary ring to Lap_h at the interior nodes."""
    b = np.zeros((values.shape[0] - 2, values.shape[1] - 2))
    b[0, :] += values[0, 1:-1]
    b[-1, :] += values[-1, 1:-1]
    b[:, 0] += values[1:-1, 0]
    b[:, -1] += values[1:-1, -1]
    return b / h**2


def _delta(reg) -> float:
    return reg.delta if isinstance(reg, RegularizationParam) else float(reg)


def check_regime(model: PotentialModel, cfg: StringConfiguration) -> None:
    if model.a * cfg.N > 1.0 + 1e-12:
        raise RegimeError("a*N > 1 lies outside the existence regime")
    if cfg.N > 0 and model.a * cfg.N >= 1.0 - 1e-12 and cfg.n_distinct < 2:
        raise RegimeError(
            "a*N = 1 with a single center needs the radial solver (solve-radial); "
            "the planar solver requires at least two distinct centers"
        )


def nonlinear_term(model: PotentialModel, U, weight, v):
    """g0 W e^{a v} e^{-(a/m) e^{mU}} (e^{mU} - 1) with U = u0^delta + v.

    Equals h(U) F_delta; written through W to stay finite near the centers.
    """
    s = np.exp(model.m * U)
    return (
        model.g0 * weight * np.exp(model.a * v - (model.a / model.m) * s)
        * np.expm1(model.m * U)
    )


def rhs_eval(model: PotentialModel, cfg: StringConfiguration, reg, v_value, x):
    """Pointwise right-hand side of the regularized equation with the analytic g.

    ``reg`` may be a RegularizationParam or a float; 0 selects the
    unregularized equation (x must then avoid the centers).
    """
    delta = _delta(reg)
    v_value = np.asarray(v_value, dtype=float)
    u0d = np.asarray(u0_delta_eval(cfg, delta, x))
    if delta == 0.0 and np.any(np.isinf(u0d)):
        raise DomainError("rhs at delta = 0 evaluated on a string center")
    W = np.asarray(weight_eval(cfg, model.a, x))
    with np.errstate(over="raise", invalid="raise"):
        try:
            val = nonlinear_term(model, u0d + v_value, W, v_value)
        except FloatingPointError as exc:
            raise ArithmeticError(f"non-finite right-hand side at {np.asarray(x).tolist()}") from exc
    val = val + np.asarray(source_g_eval(cfg, x))
    return float(val) if np.ndim(val) == 0 else val


@dataclass
class _Discretization:
    """Grid arrays shared by every iteration of one delta stage."""

    model: PotentialModel
    cfg: StringConfiguration
    grid: Grid
    delta: float
    lift: str = "far"

    def __post_init__(self):
        P = self.grid.points()
        h = self.grid.spacing
        self.u0d = np.asarray(u0_delta_eval(self.cfg, self.delta, P), dtype=float)
        if self.cfg.N == 0:
            self.u0d = np.zeros(P.shape[:-1])
        self.weight = np.asarray(weight_eval(self.cfg, self.model.a, P), dtype=float) * np.ones(P.shape[:-1])
        g = np.asarray(source_g_eval(self.cfg, P), dtype=float) * np.ones(P.shape[:-1])
        lap_u0 = laplacian(self.u0d, h)
        self.g = g
        self.g_h = g.copy()
        if self.lift == "far":
            far = self.cfg.min_dist(P) >= LIFT_RADIUS
            lifted = np.maximum(g, np.nan_to_num(-lap_u0, nan=-np.inf))
            self.g_h = np.where(far, lifted, g)
        elif self.lift != "none":
            raise DomainError(f"unknown source lift {self.lift!r}")
        F = np.asarray(F_delta_eval(self.cfg, self.delta, self.model.a, P)) * np.ones(P.shape[:-1])
        self.K = self.model.g0 * self.model.m * math.exp(-self.model.a / self.model.m) * F
        self.upper = -self.u0d

    def rhs(self, v):
        return nonlinear_term(self.model, self.u0d + v, self.weight, v) + self.g_h

    def residual(self, v) -> float:
        lap = laplacian(v, self.grid.spacing)
        r = lap[1:-1, 1:-1] - self.rhs(v)[1:-1, 1:-1]
        return float(np.max(np.abs(r))) if r.size else 0.0


@dataclass(frozen=True)
class PlanarField:
    """Solved v on the grid with solve metadata.

    ``values`` holds v at every node including the boundary ring.
    ``history`` has one record per monotone step (see ``solve_regularized``).
    """

    values: np.ndarray
    cfg: StringConfiguration
    model: PotentialModel
    grid: Grid
    delta: float
    residual_norm: float
    iterations: int
    history: tuple = ()
    stages: tuple = ()
    cauchy: tuple = ()

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def u0_delta(self) -> np.ndarray:
        if self.cfg.N == 0:
            return np.zeros_like(self.values)
        return np.asarray(u0_delta_eval(self.cfg, self.delta, self.grid.points()))

    @property
    def u(self) -> np.ndarray:
        """u = u0 + v with the unregularized background (finite off the centers)."""
        if self.cfg.N == 0:
            return np.array(self.values)
        return np.asarray(u0_eval(self.cfg, self.grid.points())) + self.values


def check_subsolution(model: PotentialModel, cfg: StringConfiguration, reg, grid: Grid) -> dict:
    """Test v = 0 as a discrete subsolution at every interior node.

    Returns ``passed``, the smallest admissible coupling ``C0`` (the
    condition holds iff g0 > C0), ``factor = C0 / g0`` by which g0 must
    grow when the check fails, the number of failing nodes and the worst
    node.
    """
    if model.a * cfg.N > 1.0 + 1e-12:
        raise RegimeError("the subsolution construction requires a*N <= 1")
    disc = _Discretization(model, cfg, grid, _delta(reg))
    zero = np.zeros_like(disc.u0d)
    per_g0 = nonlinear_term(model, disc.u0d, disc.weight, zero)[1:-1, 1:-1] / model.g0
    src = disc.g_h[1:-1, 1:-1]
    if cfg.N == 0:
        # rhs(0) vanishes identically; 0 is an exact solution
        return {"passed": True, "C0": 0.0, "factor": 0.0, "failing_nodes": 0, "worst_node": None}
    total = model.g0 * per_g0 + src
    ratio = src / (-per_g0)
    C0 = float(np.max(ratio))
    idx = np.unravel_index(np.argmax(total), total.shape)
    worst = grid.points()[1:-1, 1:-1][idx]
    failing = int(np.count_nonzero(total >= 0))
    return {
        "passed": failing == 0,
        "C0": C0,
        "factor": C0 / model.g0,
        "failing_nodes": failing,
        "worst_node": (float(worst[0]), float(worst[1])),
    }


def auto_g0(model: PotentialModel, cfg: StringConfiguration, grid: Grid,
            schedule: Sequence[float], safety: float = 1.25) -> float:
    """Smallest g0 making v = 0 a subsolution at every stage, times ``safety``."""
    C0 = max(check_subsolution(model, cfg, d, grid)["C0"] for d in schedule)
    return safety * C0 if C0 > 0 else model.g0


def solve_regularized(
    model: PotentialModel,
    cfg: StringConfiguration,
    reg,
    grid: Grid,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
) -> PlanarField:
    """Monotone iteration for one delta, descending from v = -u0^delta.

    Each history record holds the step index, the max-norm residual, the
    successive difference, the largest nodewise increase (nonpositive up
    to round-off for a monotone descent) and the bracket margins.
    """
    delta = _delta(reg)
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta!r}")
    check_regime(model, cfg)
    disc = _Discretization(model, cfg, grid, delta)
    h = grid.spacing
    v = disc.upper.copy()
    res = disc.residual(v)
    history = [{"step": 0, "residual": res, "diff": math.inf, "max_increase": 0.0,
                "min_v": float(v.min()), "max_over_upper": 0.0}]
    if cfg.N == 0 or res <= tol:
        return PlanarField(v, cfg, model, grid, delta, res, 0, tuple(history))

    sub = check_subsolution(model, cfg, delta, grid)
    # Without gravity the descent from -u0^delta is monotone and bounded below
    # by the unique solution, so a failed v = 0 subsolution only drops the
    # lower bracket (the flat vortex has v < 0 near its center).
    lower_bound = sub["passed"]
    if not sub["passed"] and model.a > 0:
        raise RegimeError(
            f"v = 0 is not a subsolution at delta = {delta:g}: g0 must grow by factor "
            f"{sub['factor']:.4g} (C0 = {sub['C0']:.6g})"
        )

    n_in = grid.size - 2
    A = _laplacian_matrix(n_in, h) - sp.diags(disc.K[1:-1, 1:-1].ravel())
    lu = splu(A.tocsc())
    bterm = _boundary_term(v, h)
    K_in = disc.K[1:-1, 1:-1]
    scale = max(1.0, float(np.max(np.abs(disc.upper))))

    for k in range(1, max_iter + 1):
        rhs = disc.rhs(v)[1:-1, 1:-1] - K_in * v[1:-1, 1:-1] - bterm
        new = v.copy()
        new[1:-1, 1:-1] = lu.solve(rhs.ravel()).reshape(n_in, n_in)
        step = new - v
        max_inc = float(step.max())
        over = float(np.max(new - disc.upper))
        low = float(new.min())
        if over > ROUND_TOL * scale or (lower_bound and low < -ROUND_TOL * scale):
            raise BracketError(
                f"iterate {k} left the bracket [0, -u0^delta] (over={over:.3e}, min={low:.3e})"
            )
        v = new
        diff = float(np.max(np.abs(step)))
        res = disc.residual(v)
        history.append({"step": k, "residual": res, "diff": diff, "max_increase": max_inc,
                        "min_v": low, "max_over_upper": over})
        if res <= tol and diff <= tol:
            log.debug("delta=%g converged in %d steps, residual %.3e", delta, k, res)
            return PlanarField(v, cfg, model, grid, delta, res, k, tuple(history))
    raise ConvergenceError(
        f"monotone iteration at delta={delta:g} did not reach tol={tol:g} in {max_iter} steps",
        history=[r["residual"] for r in history],
    )


def continue_delta(
    model: PotentialModel,
    cfg: StringConfiguration,
    grid: Grid,
    schedule: Optional[Sequence[float]] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
) -> PlanarField:
    """Solve along a strictly decreasing delta schedule.

    Every stage restarts the descent from its own supersolution -u0^delta:
    the previous stage's solution lies below the next stage's solution
    (the right-hand side decreases with delta), so it cannot seed a
    descending iteration.  The returned field carries per-stage summaries
    and the Cauchy differences sup|v^{delta_k} - v^{delta_{k+1}}|.
    """
    schedule = list(default_schedule() if schedule is None else schedule)
    if not schedule:
        raise DomainError("empty delta schedule")
    if any(not 0.0 < d < 1.0 for d in schedule):
        raise DomainError("schedule entries must lie in (0, 1)")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise DomainError("delta schedule must be strictly decreasing")
    check_regime(model, cfg)

    stages, cauchy = [], []
    prev = None
    total_iter = 0
    for i, delta in enumerate(schedule):
        try:
            fld = solve_regularized(model, cfg, delta, grid, tol, max_iter)
        except (ConvergenceError, BracketError, RegimeError) as exc:
            if isinstance(exc, ConvergenceError):
                exc.stage = i
            raise type(exc)(f"stage {i} (delta={delta:g}): {exc}") from exc
        total_iter += fld.iterations
        hist = fld.history
        stage = {
            "delta": delta,
            "iterations": fld.iterations,
            "residual": fld.residual_norm,
            "min_v": float(fld.values.min()),
            "max_over_upper": float(np.max(fld.values + fld.u0_delta)),
            "max_increase": max((r["max_increase"] for r in hist[1:]), default=0.0),
        }
        if prev is not None:
            cauchy.append(float(np.max(np.abs(fld.values - prev.values))))
        stages.append(stage)
        prev = fld
    return PlanarField(
        np.array(prev.values), cfg, model, grid, prev.delta, prev.residual_norm,
        total_iter, prev.history, tuple(stages), tuple(cauchy),
    )


def residual(model: PotentialModel, cfg: StringConfiguration, field: PlanarField) -> float:
    """Max-norm residual of the discrete equation at ``field.delta``."""
    if cfg.N == 0 and not np.any(field.values):
        return 0.0
    disc = _Discretization(model, cfg, field.grid, field.delta)
    return disc.residual(np.asarray(field.values, dtype=float))


def source_lift(model: PotentialModel, cfg: StringConfiguration, grid: Grid, delta: float) -> float:
    """max |g_h - g| over interior nodes: the O(h^2) change of the source."""
    disc = _Discretization(model, cfg, grid, delta)
    return float(np.max(np.abs(disc.g_h - disc.g)[1:-1, 1:-1]))
