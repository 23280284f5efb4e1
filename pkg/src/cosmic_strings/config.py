"""Job configuration: TOML parsing, validation and serialization.

Grammar (all sections optional except [model])::

    [model]
    N = 2                       # total string number; may be omitted when centers are given
    centers = [[-1.0, 0.0], [1.0, 0.0, 1]]   # [x, y] or [x, y, multiplicity]
    m = 1.0
    a = 0.5                     # or G = a / (8 pi); exactly one of the two
    g0 = "auto"                 # or a positive number

    [grid]
    R = 12.0
    n = 257

    [solver]
    schedule = "default"        # or a strictly decreasing list in (0, 1)
    tol = 1e-8
    max_iter = 500

    [radial]
    t0 = "auto"                 # or a number
    t_end = "auto"              # or a number; auto means t0 + 40
    step = 1e-3
    fit_window = "auto"         # or [t_lo, t_hi]

    [sweep]
    N = [1, 2, 3]
    m = [1.0, 2.0]

    [output]
    dir = "out"

g0 = "auto" resolves to the calibrated value at parse time when aN = 1;
below criticality it is kept and resolved by the planar command from the
subsolution check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import tomli
import tomli_w

from .background import StringConfiguration
from .errors import ConfigError, DomainError, RegimeError
from .model import PotentialModel, calibrate_g0
from .planar import DEFAULT_TOL, MAX_ITER
from .radial import DEFAULT_STEP

_KEYS = {
    "model": {"N", "centers", "m", "a", "G", "g0"},
    "grid": {"R", "n"},
    "solver": {"schedule", "tol", "max_iter"},
    "radial": {"t0", "t_end", "step", "fit_window"},
    "sweep": {"N", "m"},
    "output": {"dir"},
}

AUTO = "auto"


@dataclass(frozen=True)
class JobConfig:
    N: int
    m: float
    a: float
    g0: Union[float, str]
    centers: tuple = ()           # merged ((x, y), n) pairs; empty means N coincident at the origin
    R: float = 12.0
    n: int = 129
    schedule: Union[str, tuple] = "default"
    tol: float = DEFAULT_TOL
    max_iter: int = MAX_ITER
    t0: Union[float, str] = AUTO
    t_end: Union[float, str] = AUTO
    step: float = DEFAULT_STEP
    fit_window: Union[tuple, str] = AUTO
    sweep_N: tuple = ()
    sweep_m: tuple = ()
    output: str = "out"

    @property
    def string_config(self) -> StringConfiguration:
        if self.centers:
            return StringConfiguration(self.centers)
        return StringConfiguration.coincident(self.N)

    def model(self, g0: Optional[float] = None) -> PotentialModel:
        """PotentialModel with ``g0`` overriding an unresolved "auto"."""
        value = self.g0 if g0 is None else g0
        if value == AUTO:
            raise ConfigError("g0 = 'auto' must be resolved before building the model")
        return PotentialModel(N=self.N, m=self.m, a=self.a, g0=float(value))


def _err_keys(section: str, extra) -> ConfigError:
    return ConfigError(
        f"unknown key(s) {sorted(extra)} in [{section}]; valid keys: {sorted(_KEYS[section])}"
    )


def _number(sec: dict, key: str, default, kind=float, allow_auto: bool = False):
    if key not in sec:
        return default
    val = sec[key]
    if allow_auto and val == AUTO:
        return AUTO
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{key} must be a number, got {val!r}")
    if kind is int:
        if int(val) != val:
            raise ConfigError(f"{key} must be an integer, got {val!r}")
        return int(val)
    return float(val)


def _centers(raw) -> tuple:
    if not isinstance(raw, list):
        raise ConfigError("centers must be a list of [x, y] or [x, y, n]")
    entries = []
    for item in raw:
        if not isinstance(item, list) or len(item) not in (2, 3):
            raise ConfigError(f"bad center entry {item!r}; expected [x, y] or [x, y, n]")
        n = item[2] if len(item) == 3 else 1
        entries.append(((float(item[0]), float(item[1])), n))
    try:
        return StringConfiguration(tuple(entries)).centers
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def from_dict(doc: dict) -> JobConfig:
    """Validate a parsed TOML document."""
    extra = set(doc) - set(_KEYS)
    if extra:
        raise ConfigError(f"unknown section(s) {sorted(extra)}; valid sections: {sorted(_KEYS)}")
    for name, sec in doc.items():
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        bad = set(sec) - _KEYS[name]
        if bad:
            raise _err_keys(name, bad)
    if "model" not in doc:
        raise ConfigError("missing [model] section")
    mdl = doc["model"]
    grid = doc.get("grid", {})
    sol = doc.get("solver", {})
    rad = doc.get("radial", {})
    swp = doc.get("sweep", {})
    out = doc.get("output", {})

    centers = _centers(mdl["centers"]) if "centers" in mdl else ()
    total = sum(n for _, n in centers)
    N = _number(mdl, "N", None, int)
    if N is None:
        if not centers:
            raise ConfigError("give N or a centers list")
        N = total
    elif centers and N != total:
        raise ConfigError(f"N = {N} disagrees with the centers list (total multiplicity {total})")
    if N < 0:
        raise ConfigError("N must be nonnegative")

    m = _number(mdl, "m", None)
    if m is None or m <= 0:
        raise ConfigError("m must be given and positive")
    if "a" in mdl and "G" in mdl:
        raise ConfigError("give either a or G, not both")
    if "G" in mdl:
        a = 8.0 * math.pi * _number(mdl, "G", 0.0)
    else:
        a = _number(mdl, "a", None)
        if a is None:
            raise ConfigError("one of a or G is required")
    if a < 0:
        raise ConfigError("a must be nonnegative")
    if a * N > 1.0 + 1e-12:
        raise RegimeError(
            f"a*N = {a * N:.6g} > 1: no solution exists outside the regime a*N <= 1"
        )

    g0 = _number(mdl, "g0", AUTO, allow_auto=True)
    if g0 != AUTO and g0 <= 0:
        raise ConfigError("g0 must be positive")
    if g0 == AUTO and N >= 1 and abs(a * N - 1.0) <= 1e-12:
        g0 = calibrate_g0(N, m)

    schedule = sol.get("schedule", "default")
    if schedule != "default":
        if not isinstance(schedule, list) or not schedule:
            raise ConfigError("schedule must be 'default' or a nonempty list")
        schedule = tuple(float(d) for d in schedule)
        if any(not 0 < d < 1 for d in schedule) or any(b >= a_ for a_, b in zip(schedule, schedule[1:])):
            raise ConfigError("schedule must be strictly decreasing inside (0, 1)")

    fit = rad.get("fit_window", AUTO)
    if fit != AUTO:
        if not isinstance(fit, list) or len(fit) != 2 or not fit[0] < fit[1]:
            raise ConfigError("fit_window must be 'auto' or [t_lo, t_hi] with t_lo < t_hi")
        fit = (float(fit[0]), float(fit[1]))

    cfg = JobConfig(
        N=N, m=m, a=a, g0=g0, centers=centers,
        R=_number(grid, "R", 12.0),
        n=_number(grid, "n", 129, int),
        schedule=schedule,
        tol=_number(sol, "tol", DEFAULT_TOL),
        max_iter=_number(sol, "max_iter", MAX_ITER, int),
        t0=_number(rad, "t0", AUTO, allow_auto=True),
        t_end=_number(rad, "t_end", AUTO, allow_auto=True),
        step=_number(rad, "step", DEFAULT_STEP),
        fit_window=fit,
        sweep_N=tuple(int(v) for v in swp.get("N", ())),
        sweep_m=tuple(float(v) for v in swp.get("m", ())),
        output=str(out.get("dir", "out")),
    )
    if cfg.R <= 0 or cfg.n < 5:
        raise ConfigError("grid needs R > 0 and n >= 5")
    if cfg.tol <= 0 or cfg.step <= 0 or cfg.max_iter < 1:
        raise ConfigError("tol, step and max_iter must be positive")
    return cfg


def parse_config(text: str) -> JobConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return from_dict(doc)


def load_config(path) -> JobConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def to_dict(cfg: JobConfig) -> dict:
    model = {"N": cfg.N, "m": cfg.m, "a": cfg.a, "g0": cfg.g0}
    if cfg.centers:
        model["centers"] = [[x, y, n] for (x, y), n in cfg.centers]
    doc = {
        "model": model,
        "grid": {"R": cfg.R, "n": cfg.n},
        "solver": {
            "schedule": list(cfg.schedule) if cfg.schedule != "default" else "default",
            "tol": cfg.tol,
            "max_iter": cfg.max_iter,
        },
        "radial": {
            "t0": cfg.t0,
            "t_end": cfg.t_end,
            "step": cfg.step,
            "fit_window": list(cfg.fit_window) if cfg.fit_window != AUTO else AUTO,
        },
        "output": {"dir": cfg.output},
    }
    if cfg.sweep_N or cfg.sweep_m:
        doc["sweep"] = {"N": list(cfg.sweep_N), "m": list(cfg.sweep_m)}
    return doc


def serialize_config(cfg: JobConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))
