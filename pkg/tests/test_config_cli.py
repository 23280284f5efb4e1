import filecmp
import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cosmic_strings.cli import main, read_csv, write_csv
from cosmic_strings.config import (
    JobConfig,
    load_config,
    parse_config,
    serialize_config,
)
from cosmic_strings.errors import ConfigError, RegimeError

PLANAR = """
[model]
centers = [[-1.0, 0.0], [1.0, 0.0]]
m = 1.0
a = 0.25
g0 = "auto"
[grid]
R = 12.0
n = 49
[solver]
schedule = [0.5, 0.25, 0.125, 0.0625]
"""

RADIAL = """
[model]
N = 1
m = 1.0
a = 1.0
g0 = "auto"
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_minimal_radial_config_calibrates():
    job = parse_config(RADIAL)
    assert job.g0 == pytest.approx(2 * math.e, rel=1e-15)
    assert job.t0 == "auto" and job.n == 129


def test_G_is_stored_as_a():
    job = parse_config(f"[model]\nN = 2\nm = 1.0\nG = {0.25 / (8 * math.pi)!r}\ng0 = 3.0\n")
    assert job.a == pytest.approx(0.25)
    with pytest.raises(ConfigError):
        parse_config("[model]\nN = 1\nm = 1.0\nG = 0.001\na = 0.1\n")


def test_supercritical_rejected():
    with pytest.raises(RegimeError, match="a\\*N"):
        parse_config("[model]\nN = 3\nm = 1.0\na = 0.5\n")


def test_unknown_keys_listed():
    with pytest.raises(ConfigError, match="valid keys"):
        parse_config("[model]\nN = 1\nm = 1.0\na = 0.5\ngee = 1\n")
    with pytest.raises(ConfigError, match="valid sections"):
        parse_config("[model]\nN = 1\nm = 1.0\na = 0.5\n[extra]\nx = 1\n")


def test_duplicate_centers_merge():
    job = parse_config("[model]\ncenters = [[1, 0], [1, 0], [0, 2, 3]]\nm = 1.0\na = 0.1\n")
    assert job.centers == (((1.0, 0.0), 2), ((0.0, 2.0), 3))
    assert job.N == 5


def test_inconsistent_N_and_centers():
    with pytest.raises(ConfigError):
        parse_config("[model]\nN = 3\ncenters = [[1, 0]]\nm = 1.0\na = 0.1\n")


@pytest.mark.parametrize("text", [
    "[model]\nN = 1\na = 0.5\n",
    "[model]\nN = 1\nm = -1.0\na = 0.5\n",
    "[model]\nN = 1\nm = 1.0\na = 0.5\ng0 = -2\n",
    "[model]\nN = 1\nm = 1.0\na = 0.5\n[solver]\nschedule = [0.1, 0.2]\n",
    "[model]\nN = 1\nm = 1.0\na = 0.5\n[grid]\nn = 3\n",
    "[model\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


_center = st.tuples(st.floats(-5, 5, allow_nan=False), st.floats(-5, 5, allow_nan=False),
                    st.integers(1, 3))


@st.composite
def job_configs(draw):
    centers = draw(st.lists(_center, min_size=0, max_size=4))
    text = "[model]\n"
    if centers:
        text += "centers = [" + ", ".join(f"[{x!r}, {y!r}, {n}]" for x, y, n in centers) + "]\n"
        N = sum(n for *_, n in centers)
    else:
        N = draw(st.integers(0, 5))
        text += f"N = {N}\n"
    m = draw(st.floats(0.1, 6.0))
    a = draw(st.floats(0.0, 1.0)) / max(N, 1)
    text += f"m = {m!r}\na = {a!r}\n"
    g0 = draw(st.one_of(st.just('"auto"'), st.floats(0.01, 100.0).map(repr)))
    text += f"g0 = {g0}\n"
    text += f"[grid]\nR = {draw(st.floats(5.0, 50.0))!r}\nn = {draw(st.integers(5, 600))}\n"
    sched = draw(st.one_of(st.just('"default"'), st.lists(st.floats(1e-6, 0.99), min_size=1,
                                                         max_size=5, unique=True)
                           .map(lambda s: repr(sorted(s, reverse=True)))))
    text += f"[solver]\nschedule = {sched}\ntol = {draw(st.floats(1e-12, 1e-4))!r}\n"
    t0 = draw(st.one_of(st.just('"auto"'), st.floats(-50, 0).map(repr)))
    text += f"[radial]\nt0 = {t0}\nstep = {draw(st.floats(1e-4, 1e-2))!r}\n"
    if draw(st.booleans()):
        text += "fit_window = [1.0, 4.5]\n"
    if draw(st.booleans()):
        text += "[sweep]\nN = [1, 2]\nm = [1.0, 0.5]\n"
    text += f'[output]\ndir = "{draw(st.sampled_from(["out", "runs/a b", "x"]))}"\n'
    return text


@settings(max_examples=120, deadline=None)
@given(text=job_configs())
def test_round_trip(text):
    try:
        job = parse_config(text)
    except ConfigError:
        return  # e.g. strictly-decreasing schedule collapsed by rounding
    again = parse_config(serialize_config(job))
    assert again == job


def test_csv_round_trip_is_exact(tmp_path, rng):
    vals = rng.standard_normal((20, 3)) * 10.0 ** rng.integers(-200, 200, (20, 3))
    p = str(tmp_path / "x.csv")
    write_csv(p, ("a", "b", "c"), vals)
    back = read_csv(p)
    assert np.array_equal(np.stack([back["a"], back["b"], back["c"]], axis=1), vals)


# ---------------------------------------------------------------- commands


@pytest.fixture(scope="module")
def planar_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("planar")
    cfg = _write(d, "job.toml", PLANAR)
    out = str(d / "out")
    code = main(["solve-planar", cfg, "-o", out])
    return code, out, cfg, d


def test_solve_planar_outputs(planar_run):
    code, out, _, _ = planar_run
    assert code == 0
    cols = read_csv(os.path.join(out, "field.csv"))
    assert list(cols) == ["x", "y", "v", "u", "F12", "H", "eta", "Kg"]
    with open(os.path.join(out, "summary.json")) as fh:
        summary = json.load(fh)
    assert summary["checks"]["flux"]["value"] == pytest.approx(4 * math.pi, rel=0.01)
    assert summary["passed"]


def test_planar_dump_is_deterministic(planar_run):
    _, out, cfg, d = planar_run
    out2 = str(d / "out2")
    assert main(["solve-planar", cfg, "-o", out2]) == 0
    for name in ("field.csv", "summary.json", "config.toml"):
        assert filecmp.cmp(os.path.join(out, name), os.path.join(out2, name), shallow=False)


def test_verify_planar_and_tamper(planar_run, tmp_path):
    _, out, _, _ = planar_run
    assert main(["verify", out]) == 0
    # corrupt u at one node far from the centers
    import shutil
    bad = str(tmp_path / "bad")
    shutil.copytree(out, bad)
    path = os.path.join(bad, "field.csv")
    lines = open(path).read().splitlines()
    cols = read_csv(os.path.join(out, "field.csv"))
    k = int(np.argmin((cols["x"] - 5.0) ** 2 + (cols["y"] - 5.0) ** 2))
    row = lines[k + 1].split(",")
    row[3] = repr(float(row[3]) - 0.5)  # shifts 1/2 Lap_h u by 4 at h = 0.5
    lines[k + 1] = ",".join(row)
    open(path, "w").write("\n".join(lines) + "\n")
    assert main(["verify", bad]) == 1
    with open(os.path.join(bad, "verify.json")) as fh:
        rep = json.load(fh)
    assert not rep["checks"]["self_dual"]["passed"]


def test_single_center_critical_planar_exits_2(tmp_path):
    cfg = _write(tmp_path, "one.toml", RADIAL)
    assert main(["solve-planar", cfg, "-o", str(tmp_path / "o")]) == 2


def test_supercritical_exits_2(tmp_path):
    cfg = _write(tmp_path, "bad.toml", "[model]\nN = 3\nm = 1.0\na = 0.5\n")
    assert main(["solve-planar", cfg]) == 2


def test_config_error_exits_3(tmp_path):
    cfg = _write(tmp_path, "typo.toml", "[model]\nN = 1\nm = 1.0\na = 0.5\nbogus = 1\n")
    assert main(["solve-radial", cfg]) == 3
    assert main(["solve-radial", str(tmp_path / "missing.toml")]) == 3
    assert main(["verify", str(tmp_path / "nothing_here")]) == 3


def test_radial_command_and_verify(tmp_path):
    cfg = _write(tmp_path, "r.toml", RADIAL)
    out = str(tmp_path / "r")
    assert main(["solve-radial", cfg, "-o", out]) == 0
    cols = read_csv(os.path.join(out, "profile.csv"))
    assert list(cols) == ["t", "r", "U", "Uprime", "u", "u_r", "first_integral_residual"]
    assert np.max(np.abs(cols["first_integral_residual"])) <= 4e-8
    with open(os.path.join(out, "summary.json")) as fh:
        s = json.load(fh)
    assert s["checks"]["decay"]["rate"] == pytest.approx(math.sqrt(2), rel=0.02)
    assert main(["verify", out]) == 0


def test_radial_command_refuses_noncritical(tmp_path):
    cfg = _write(tmp_path, "r.toml", "[model]\nN = 1\nm = 1.0\na = 0.5\ng0 = 2.0\n")
    assert main(["solve-radial", cfg, "-o", str(tmp_path / "r")]) == 2


def test_verify_fresh_empty_configuration(tmp_path):
    cfg = _write(tmp_path, "z.toml", "[model]\nN = 0\nm = 1.0\na = 0.0\ng0 = 1.0\n[grid]\nn = 17\n")
    assert main(["verify", "--config", cfg, "-o", str(tmp_path / "z")]) == 0
    with open(tmp_path / "z" / "summary.json") as fh:
        assert json.load(fh)["checks"]["residual"]["value"] == 0.0


def test_sweep(tmp_path):
    cfg = _write(tmp_path, "s.toml", RADIAL + "[sweep]\nN = [1, 2]\nm = [1.0]\n")
    out = str(tmp_path / "s")
    assert main(["sweep", cfg, "-o", out]) == 0
    cols = read_csv(os.path.join(out, "sweep.csv"))
    assert np.allclose(cols["expected"], [math.sqrt(2), 2.0])
    assert np.all(cols["passed"] == 1.0)


def test_load_config_path(tmp_path):
    p = _write(tmp_path, "c.toml", RADIAL)
    assert isinstance(load_config(p), JobConfig)
