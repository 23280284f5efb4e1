"""Background functions absorbing the Dirac sources at the string centers.

Points are given as arrays whose last axis has length 2.  Every sum and
product over centers is weighted by the center multiplicity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

# Evaluations closer than this to a center with delta = 0 are flagged.
CENTER_EPS = 1e-12


@dataclass(frozen=True)
class StringConfiguration:
    """Merged string centers ``((x, y), multiplicity)``."""

    centers: tuple = ()

    def __post_init__(self):
        merged: list[list] = []
        for entry in self.centers:
            (px, py), n = entry
            if int(n) != n or n < 1:
                raise DomainError(f"multiplicity must be a positive integer, got {n!r}")
            px, py = float(px), float(py)
            for item in merged:
                if abs(item[0] - px) <= CENTER_EPS and abs(item[1] - py) <= CENTER_EPS:
                    item[2] += int(n)
                    break
            else:
                merged.append([px, py, int(n)])
        object.__setattr__(
            self, "centers", tuple(((px, py), n) for px, py, n in merged)
        )

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> "StringConfiguration":
        """Build from a list of points, repeated points counting as multiplicity."""
        return cls(tuple(((p[0], p[1]), 1) for p in points))

    @classmethod
    def coincident(cls, N: int, at=(0.0, 0.0)) -> "StringConfiguration":
        return cls(((tuple(at), N),)) if N > 0 else cls(())

    @property
    def N(self) -> int:
        return sum(n for _, n in self.centers)

    @property
    def points(self) -> np.ndarray:
        return np.array([p for p, _ in self.centers], dtype=float).reshape(-1, 2)

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([n for _, n in self.centers], dtype=float)

    @property
    def n_distinct(self) -> int:
        return len(self.centers)

    @property
    def extent(self) -> float:
        """max |p_s|, zero for the empty configuration."""
        pts = self.points
        return float(np.max(np.hypot(pts[:, 0], pts[:, 1]))) if len(pts) else 0.0

    def _sq_dists(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 2:
            raise DomainError("points must have a trailing axis of length 2")
        for (px, py), n in self.centers:
            yield (x[..., 0] - px) ** 2 + (x[..., 1] - py) ** 2, n

    def min_dist(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], np.inf)
        for d2, _ in self._sq_dists(x):
            out = np.minimum(out, np.sqrt(d2))
        return out


@dataclass(frozen=True)
class RegularizationParam:
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta!r}")


def _zeros(x):
    return np.zeros(np.asarray(x, dtype=float).shape[:-1])


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def u0_eval(cfg: StringConfiguration, x, return_mask: bool = False):
    """sum n_s ln(|x-p_s|^2 / (1 + |x-p_s|^2)); -inf on a center.

    With ``return_mask`` the boolean on-center flag is returned as well.
    """
    out = _zeros(x)
    hit = np.zeros(out.shape, dtype=bool)
    for d2, n in cfg._sq_dists(x):
        near = d2 < CENTER_EPS**2
        hit |= near
        with np.errstate(divide="ignore"):
            out = out - n * np.log1p(1.0 / np.where(near, 1.0, d2))
    out = np.where(hit, -np.inf, out)
    if return_mask:
        return _out(out), hit
    return _out(out)


def w0_eval(cfg: StringConfiguration, x):
    out = _zeros(x)
    for d2, n in cfg._sq_dists(x):
        out = out + n * np.log1p(d2)
    return _out(out)


def source_g_eval(cfg: StringConfiguration, x):
    """g = Laplacian of w0 = 4 sum n_s / (1 + |x-p_s|^2)^2."""
    out = _zeros(x)
    for d2, n in cfg._sq_dists(x):
        out = out + 4.0 * n / (1.0 + d2) ** 2
    return _out(out)


def log_dist_sum(cfg: StringConfiguration, x):
    """sum n_s ln |x-p_s|^2 (-inf on a center)."""
    out = _zeros(x)
    with np.errstate(divide="ignore"):
        for d2, n in cfg._sq_dists(x):
            out = out + n * np.log(d2)
    return _out(out)


def _delta(reg) -> float:
    return reg.delta if isinstance(reg, RegularizationParam) else float(reg)


def u0_delta_eval(cfg: StringConfiguration, reg, x):
    """Regularized background sum n_s ln((delta + |x-p_s|^2) / (1 + |x-p_s|^2)).

    Written as -sum n_s ln(1 + (1-delta)/(delta + |x-p_s|^2)) for accuracy
    far from the centers.
    """
    delta = _delta(reg)
    if delta == 0.0:
        return u0_eval(cfg, x)
    out = _zeros(x)
    for d2, n in cfg._sq_dists(x):
        out = out - n * np.log1p((1.0 - delta) / (delta + d2))
    return _out(out)


def regularized_source_eval(cfg: StringConfiguration, reg, x):
    """sum 4 delta n_s / (delta + |x-p_s|^2)^2, the smoothed Dirac mass in Lap u0^delta."""
    delta = _delta(reg)
    out = _zeros(x)
    for d2, n in cfg._sq_dists(x):
        out = out + 4.0 * delta * n / (delta + d2) ** 2
    return _out(out)


def F_delta_eval(cfg: StringConfiguration, reg, a: float, x):
    """prod_s (delta + |x-p_s|^2)^(-a n_s); delta = 0 allowed off-center only."""
    if a < 0:
        raise DomainError("a must be nonnegative")
    delta = _delta(reg)
    logF = _zeros(x)
    if a == 0:
        return _out(np.exp(logF))
    for d2, n in cfg._sq_dists(x):
        base = delta + d2
        if delta == 0.0 and np.any(d2 < CENTER_EPS**2):
            raise DomainError("F_delta with delta = 0 evaluated on a string center")
        logF = logF - a * n * np.log(base)
    return _out(np.exp(logF))


def weight_eval(cfg: StringConfiguration, a: float, x):
    """e^{a u0^delta} F_delta = prod (1 + |x-p_s|^2)^(-a n_s), independent of delta."""
    logW = _zeros(x)
    for d2, n in cfg._sq_dists(x):
        logW = logW - a * n * np.log1p(d2)
    return _out(np.exp(logW))
