"""Command line: solve-planar, solve-radial, verify, sweep.

Exit codes: 0 ok, 1 numeric failure (or failed verification),
2 regime refusal, 3 configuration / input error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from typing import Optional

import numpy as np

from . import observables as obs
from .background import u0_eval
from .config import AUTO, JobConfig, load_config, serialize_config
from .errors import (
    BracketError,
    CalibrationError,
    ConfigError,
    ConvergenceError,
    DomainError,
    RegimeError,
)
from .model import PotentialModel, calibrate_g0, decay_exponent
from .planar import (
    Grid,
    PlanarField,
    auto_g0,
    check_regime,
    continue_delta,
    default_schedule,
    residual,
)
from .radial import (
    RadialProfile,
    amplitude_window,
    conservation_error,
    extract_decay,
    solve_radial,
    to_radial_field,
    verify_ode_residual,
)

log = logging.getLogger("cosmic_strings")

EXIT_OK, EXIT_NUMERIC, EXIT_REGIME, EXIT_CONFIG = 0, 1, 2, 3

FIELD_FILE = "field.csv"
PROFILE_FILE = "profile.csv"
SUMMARY_FILE = "summary.json"
CONFIG_FILE = "config.toml"
REPORT_FILE = "verify.json"

FIELD_COLUMNS = ("x", "y", "v", "u", "F12", "H", "eta", "Kg")
PROFILE_COLUMNS = ("t", "r", "U", "Uprime", "u", "u_r", "first_integral_residual")

# verification thresholds
FLUX_TOL = 0.01
DECAY_TOL = 0.02
CONSERVATION_TOL = 1e-8
ODE_TOL = 1e-6
COLUMN_TOL = 1e-9


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: str, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_csv(path: str) -> dict:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(x) for x in row] for row in reader], dtype=float)
    except (OSError, StopIteration, ValueError) as exc:
        raise ConfigError(f"cannot read artifact {path}: {exc}") from exc
    data = data.reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _prepare_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)


# ------------------------------------------------------------------ planar


def _schedule(job: JobConfig) -> list:
    return default_schedule() if job.schedule == "default" else list(job.schedule)


def _planar_model(job: JobConfig, grid: Grid) -> PotentialModel:
    if job.g0 != AUTO:
        return job.model()
    base = job.model(g0=1.0)
    if job.N == 0:
        return base
    g0 = auto_g0(base, job.string_config, grid, _schedule(job))
    log.info("auto g0 from the subsolution check: %.6g", g0)
    return base.with_g0(g0)


def run_planar(job: JobConfig):
    """Solve and return (field, summary dict)."""
    cfg = job.string_config
    check_regime(job.model(g0=1.0), cfg)
    grid = Grid.build(job.R, job.n, cfg)
    model = _planar_model(job, grid)
    schedule = _schedule(job)
    fld = continue_delta(model, cfg, grid, schedule, job.tol, job.max_iter)
    summary = planar_summary(fld, job.tol)
    summary["schedule"] = schedule
    summary["stages"] = list(fld.stages)
    summary["cauchy"] = list(fld.cauchy)
    summary["iterations"] = fld.iterations
    return fld, summary


def planar_checks(fld: PlanarField, tol: float, u: Optional[np.ndarray] = None,
                  stages=()) -> dict:
    """Invariant checks on a planar field (``u`` overrides u0 + v)."""
    grid, cfg, model = fld.grid, fld.cfg, fld.model
    h = grid.spacing
    v = np.asarray(fld.values)
    bound = 10.0 * (h * h + tol)
    checks = {}
    res = residual(model, cfg, fld)
    checks["residual"] = {"value": res, "limit": 10 * tol, "passed": res <= 10 * tol}
    if cfg.N:
        upper = -np.asarray(u0_eval(cfg, grid.points()))
        over = float(np.max(v - upper))
        low = float(np.min(v))
        lower_ok = low >= -1e-12 or model.a == 0  # no lower bracket without gravity
        checks["bracket"] = {"min_v": low, "max_over_upper": over,
                             "passed": bool(lower_ok and over <= 1e-12)}
        if stages:
            checks["bracket"]["stage_min_v"] = min(s["min_v"] for s in stages)
            checks["bracket"]["stage_max_over_upper"] = max(s["max_over_upper"] for s in stages)
            checks["bracket"]["stage_max_increase"] = max(s["max_increase"] for s in stages)
    sd = obs.self_dual_deviation(fld, u=u)
    checks["self_dual"] = {"value": sd, "limit": bound, "passed": sd <= bound}
    ein = obs.einstein_deviation(fld, u=u)
    checks["einstein"] = {"value": ein, "limit": bound, "passed": ein <= bound}
    if cfg.N:
        flux = obs.total_flux(fld)
        rel = flux / (2 * math.pi * cfg.N) - 1.0
        checks["flux"] = {"value": flux, "area": obs.total_flux(fld, "area"),
                          "relative_error": rel, "passed": abs(rel) <= FLUX_TOL}
        ff = obs.check_far_field_bounds(fld)
        checks["far_field"] = {"passed": ff["passed"], "checks": ff["checks"]}
    return checks


def planar_summary(fld: PlanarField, tol: float) -> dict:
    model = fld.model
    checks = planar_checks(fld, tol, stages=fld.stages)
    doc = {
        "kind": "planar",
        "model": {"N": model.N, "m": model.m, "a": model.a, "g0": model.g0},
        "grid": {"R": fld.grid.R, "n": fld.grid.n, "size": fld.grid.size,
                 "spacing": fld.grid.spacing, "shifted": fld.grid.shifted},
        "delta": fld.delta,
        "residual": fld.residual_norm,
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }
    if fld.cfg.N:
        expo, r2 = obs.deficit_exponent(fld)
        doc["deficit_exponent"] = {"value": expo, "expected": 2 * model.a * model.N, "r_squared": r2}
    return doc


def write_planar(fld: PlanarField, outdir: str) -> None:
    f = obs.planar_fields(fld)
    P = fld.grid.points()
    cols = [P[..., 0], P[..., 1], fld.values, f["u"], f["F12"], f["H"], f["eta"], f["Kg"]]
    rows = zip(*(np.asarray(c).ravel() for c in cols))
    write_csv(os.path.join(outdir, FIELD_FILE), FIELD_COLUMNS, rows)


def cmd_solve_planar(job: JobConfig, outdir: str) -> int:
    cfg = job.string_config
    try:
        check_regime(job.model(g0=1.0), cfg)
    except RegimeError as exc:
        log.error("%s", exc)
        return EXIT_REGIME
    fld, summary = run_planar(job)
    _prepare_dir(outdir)
    write_planar(fld, outdir)
    write_json(os.path.join(outdir, SUMMARY_FILE), summary)
    with open(os.path.join(outdir, CONFIG_FILE), "w") as fh:
        fh.write(serialize_config(job))
    flux = summary["checks"].get("flux", {}).get("value", 0.0)
    print(f"planar solve: N={cfg.N} g0={fld.model.g0:.6g} residual={fld.residual_norm:.3e} "
          f"flux/2piN={flux / (2 * math.pi * cfg.N) if cfg.N else 0.0:.6f} -> {outdir}")
    return EXIT_OK


# ------------------------------------------------------------------ radial


def _radial_model(job: JobConfig) -> PotentialModel:
    cfg = job.string_config
    if cfg.n_distinct > 1:
        raise RegimeError("the radial reduction needs all strings at one center")
    if job.N < 1 or abs(job.a * job.N - 1.0) > 1e-12:
        raise RegimeError(f"the radial reduction needs a*N = 1, got a*N = {job.a * job.N:.6g}")
    g0 = calibrate_g0(job.N, job.m) if job.g0 == AUTO else job.g0
    return PotentialModel(N=job.N, m=job.m, a=job.a, g0=g0)


def run_radial(job: JobConfig):
    model = _radial_model(job)
    t0 = None if job.t0 == AUTO else float(job.t0)
    t_end = None if job.t_end == AUTO else float(job.t_end)
    prof = solve_radial(model, t_end=t_end, step=job.step, t0=t0)
    window = None if job.fit_window == AUTO else job.fit_window
    return prof, radial_summary(prof, window)


def radial_checks(prof: RadialProfile, window=None) -> dict:
    model = prof.model
    N = model.N
    target = decay_exponent(N, model.m)
    if window is None:
        window = amplitude_window(prof)
    fit = extract_decay(prof, window)
    cons = conservation_error(model, prof)
    ode = verify_ode_residual(model, prof)
    flux = obs.total_flux(prof)
    ff = obs.check_far_field_bounds(prof)
    U = prof.U_samples
    return {
        "decay": {"rate": fit.rate, "ratio": fit.ratio, "expected": target,
                  "window": list(window), "r_squared": fit.r_squared,
                  "passed": abs(fit.rate / target - 1) <= DECAY_TOL
                  and abs(fit.ratio / target - 1) <= DECAY_TOL},
        "conservation": {"value": cons, "limit": CONSERVATION_TOL * 4 * N * N,
                         "passed": cons <= CONSERVATION_TOL * 4 * N * N},
        "ode_residual": {"value": ode, "limit": ODE_TOL, "passed": ode <= ODE_TOL},
        "monotone": {"passed": bool(np.all(np.diff(U) > 0) and np.all(U < 0))},
        "flux": {"value": flux, "relative_error": flux / (2 * math.pi * N) - 1,
                 "passed": abs(flux / (2 * math.pi * N) - 1) <= FLUX_TOL},
        "far_field": {"passed": ff["passed"], "checks": ff["checks"]},
    }


def radial_summary(prof: RadialProfile, window=None) -> dict:
    model = prof.model
    checks = radial_checks(prof, window)
    expo, r2 = obs.deficit_exponent(prof)
    return {
        "kind": "radial",
        "model": {"N": model.N, "m": model.m, "a": model.a, "g0": model.g0},
        "g0_calibrated": calibrate_g0(model.N, model.m),
        "t0": prof.t0,
        "t_end": float(prof.t_samples[-1]),
        "switch_t": None if prof.switch_t is None else float(prof.switch_t),
        "samples": int(prof.t_samples.size),
        "deficit_exponent": {"value": expo, "expected": 2 * model.a * model.N, "r_squared": r2},
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }


def write_profile(prof: RadialProfile, outdir: str) -> None:
    from .model import first_integral_eval

    rf = to_radial_field(prof)
    fi = prof.Uprime_samples**2 - first_integral_eval(prof.model, prof.U_samples)
    cols = [prof.t_samples, rf.r, prof.U_samples, prof.Uprime_samples, rf.u, rf.u_r, fi]
    write_csv(os.path.join(outdir, PROFILE_FILE), PROFILE_COLUMNS, zip(*cols))


def cmd_solve_radial(job: JobConfig, outdir: str) -> int:
    try:
        prof, summary = run_radial(job)
    except RegimeError as exc:
        log.error("%s", exc)
        return EXIT_REGIME
    _prepare_dir(outdir)
    write_profile(prof, outdir)
    write_json(os.path.join(outdir, SUMMARY_FILE), summary)
    with open(os.path.join(outdir, CONFIG_FILE), "w") as fh:
        fh.write(serialize_config(job))
    d = summary["checks"]["decay"]
    print(f"radial solve: N={prof.model.N} m={prof.model.m:g} g0={prof.model.g0:.12g} "
          f"decay={d['rate']:.6f} (expected {d['expected']:.6f}) -> {outdir}")
    return EXIT_OK if summary["passed"] else EXIT_NUMERIC


# ------------------------------------------------------------------ verify


def _load_summary(artifact: str) -> dict:
    path = os.path.join(artifact, SUMMARY_FILE)
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"missing or unreadable artifact {path}: {exc}") from exc


def verify_planar_artifact(job: JobConfig, artifact: str, summary: dict) -> dict:
    cols = read_csv(os.path.join(artifact, FIELD_FILE))
    cfg = job.string_config
    grid = Grid.build(job.R, job.n, cfg)
    k = grid.size
    if cols["x"].size != k * k:
        raise ConfigError(f"field dump has {cols['x'].size} rows, expected {k * k}")
    P = grid.points()
    if np.max(np.abs(cols["x"] - P[..., 0].ravel())) > 1e-12 or \
            np.max(np.abs(cols["y"] - P[..., 1].ravel())) > 1e-12:
        raise ConfigError("field dump nodes do not match the configured grid")
    sm = summary["model"]
    model = PotentialModel(N=sm["N"], m=sm["m"], a=sm["a"], g0=sm["g0"])
    v = cols["v"].reshape(k, k)
    u = cols["u"].reshape(k, k)
    fld = PlanarField(v.copy(), cfg, model, grid, float(summary["delta"]), float(summary["residual"]), 0)
    checks = planar_checks(fld, job.tol, u=u)
    # stored derived columns must agree with a recomputation from the stored u
    f = obs.planar_fields(fld, u)
    worst = 0.0
    finite = np.isfinite(u)
    ref_u = np.asarray(fld.u)
    worst = max(worst, float(np.max(np.abs(u - ref_u)[finite] / np.maximum(1.0, np.abs(ref_u[finite])))))
    for name in ("F12", "eta", "H", "Kg"):
        stored, ref = cols[name].reshape(k, k), f[name]
        ok = np.isfinite(ref)
        if np.any(np.isfinite(stored) != ok):
            worst = math.inf
            continue
        if ok.any():
            worst = max(worst, float(np.max(np.abs(stored[ok] - ref[ok]) / np.maximum(1.0, np.abs(ref[ok])))))
    checks["columns"] = {"value": worst, "limit": COLUMN_TOL, "passed": worst <= COLUMN_TOL}
    return checks


def verify_radial_artifact(job: JobConfig, artifact: str, summary: dict) -> dict:
    cols = read_csv(os.path.join(artifact, PROFILE_FILE))
    sm = summary["model"]
    model = PotentialModel(N=sm["N"], m=sm["m"], a=sm["a"], g0=sm["g0"])
    prof = RadialProfile(cols["t"], cols["U"], cols["Uprime"], float(summary["t0"]), model)
    window = None if job.fit_window == AUTO else job.fit_window
    return radial_checks(prof, window)


def cmd_verify(job: Optional[JobConfig], artifact: Optional[str], outdir: str) -> int:
    if artifact is None:
        if job is None:
            raise ConfigError("verify needs an artifact directory or a config")
        # fresh solve into outdir, then verify what was written
        solver = cmd_solve_radial if _wants_radial(job) else cmd_solve_planar
        code = solver(job, outdir)
        if code == EXIT_REGIME:
            return code
        artifact = outdir
    summary = _load_summary(artifact)
    job = load_config(os.path.join(artifact, CONFIG_FILE))
    if summary.get("kind") == "radial":
        checks = verify_radial_artifact(job, artifact, summary)
    elif summary.get("kind") == "planar":
        checks = verify_planar_artifact(job, artifact, summary)
    else:
        raise ConfigError(f"unknown artifact kind {summary.get('kind')!r}")
    passed = all(c["passed"] for c in checks.values())
    write_json(os.path.join(artifact, REPORT_FILE), {"passed": passed, "checks": checks})
    for name, c in checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}")
    return EXIT_OK if passed else EXIT_NUMERIC


def _wants_radial(job: JobConfig) -> bool:
    cfg = job.string_config
    return job.N >= 1 and cfg.n_distinct == 1 and abs(job.a * job.N - 1.0) <= 1e-12


# ------------------------------------------------------------------ sweep

SWEEP_COLUMNS = ("N", "m", "g0", "t0", "rate", "expected", "ratio", "flux_over_2piN",
                 "conservation", "ode_residual", "passed")


def cmd_sweep(job: JobConfig, outdir: str) -> int:
    Ns = job.sweep_N or (job.N,)
    ms = job.sweep_m or (job.m,)
    rows, cases = [], []
    for N, m in itertools.product(Ns, ms):
        if N < 1:
            raise ConfigError("sweep N values must be positive")
        model = PotentialModel.critical(N, m)
        t0 = None if job.t0 == AUTO else float(job.t0)
        prof = solve_radial(model, step=job.step, t0=t0)
        s = radial_summary(prof)
        c = s["checks"]
        rows.append((N, m, model.g0, prof.t0, c["decay"]["rate"], c["decay"]["expected"],
                     c["decay"]["ratio"], c["flux"]["value"] / (2 * math.pi * N),
                     c["conservation"]["value"], c["ode_residual"]["value"], float(s["passed"])))
        cases.append({"N": N, "m": m, **s})
        print(f"N={N} m={m:g}: decay {c['decay']['rate']:.6f} vs {c['decay']['expected']:.6f} "
              f"{'PASS' if s['passed'] else 'FAIL'}")
    _prepare_dir(outdir)
    write_csv(os.path.join(outdir, "sweep.csv"), SWEEP_COLUMNS, rows)
    passed = all(c["passed"] for c in cases)
    write_json(os.path.join(outdir, SUMMARY_FILE), {"kind": "sweep", "passed": passed, "cases": cases})
    return EXIT_OK if passed else EXIT_NUMERIC


# ------------------------------------------------------------------ entry


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cosmic-strings",
        description="Self-dual gravitating cosmic strings: planar and radial solvers.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("solve-planar", "monotone-iteration solve on a truncated square"),
                       ("solve-radial", "critical coincident-center profile"),
                       ("sweep", "radial solves over the [sweep] N x m grid")):
        sp_ = sub.add_parser(name, help=text)
        sp_.add_argument("config", help="TOML job file")
        sp_.add_argument("-o", "--output", help="output directory (overrides [output] dir)")
    v = sub.add_parser("verify", help="check the invariants of a solve artifact")
    v.add_argument("artifact", nargs="?", help="directory written by a solve command")
    v.add_argument("-c", "--config", help="solve this config fresh, then verify")
    v.add_argument("-o", "--output", help="output directory for a fresh solve")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            job = load_config(args.config) if args.config else None
            if args.artifact is None and job is None:
                raise ConfigError("verify needs an artifact directory or --config")
            outdir = args.output or (job.output if job else None)
            return cmd_verify(job, args.artifact, outdir)
        job = load_config(args.config)
        outdir = args.output or job.output
        if args.command == "solve-planar":
            return cmd_solve_planar(job, outdir)
        if args.command == "solve-radial":
            return cmd_solve_radial(job, outdir)
        return cmd_sweep(job, outdir)
    except RegimeError as exc:
        log.error("regime: %s", exc)
        return EXIT_REGIME
    except (ConfigError, DomainError) as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    except (ConvergenceError, BracketError, CalibrationError, ArithmeticError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
