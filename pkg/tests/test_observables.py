import math

import numpy as np
import pytest

from cosmic_strings import PotentialModel, StringConfiguration
from cosmic_strings.observables import (
    check_far_field_bounds,
    compute_observables,
    conformal_factor,
    deficit_exponent,
    einstein_deviation,
    energy_density,
    gauss_curvature,
    log_conformal_factor,
    magnetic_field,
    planar_fields,
    self_dual_deviation,
    total_flux,
)
from cosmic_strings.planar import DEFAULT_TOL, Grid, auto_g0, continue_delta, default_schedule


def _solve(points, a, n, R=12.0, stages=20):
    cfg = StringConfiguration.from_points(points)
    grid = Grid.build(R, n, cfg)
    sched = default_schedule(stages)
    base = PotentialModel(N=cfg.N, m=1.0, a=a, g0=1.0)
    model = base.with_g0(auto_g0(base, cfg, grid, sched))
    return continue_delta(model, cfg, grid, sched)


@pytest.fixture(scope="module")
def critical_pair():
    """aN = 1 with two separated centers."""
    return _solve([(-1.5, 0.0), (1.5, 0.0)], 0.5, 97)


def test_flat_conformal_factor_is_constant():
    model = PotentialModel(1, 1.0, 0.0, 3.0)
    cfg = StringConfiguration.coincident(1)
    x = np.array([[0.3, 0.1], [5.0, -2.0]])
    assert np.all(conformal_factor(model, cfg, np.array([-1.0, -0.01]), x) == 1.5)


def test_conformal_far_field_asymptotics():
    model = PotentialModel(1, 2.0, 0.4, 3.0)
    cfg = StringConfiguration.coincident(1)
    r = np.array([2.0, 10.0, 100.0])
    x = np.stack([r, np.zeros(3)], axis=-1)
    expected = 1.5 * math.exp(-0.4 / 2.0) * r ** (-0.8)
    assert np.allclose(conformal_factor(model, cfg, np.zeros(3), x), expected, rtol=1e-13)
    assert conformal_factor(model, cfg, -np.inf, (0.0, 0.0)) == 0.0


def test_magnetic_field_sign_and_zero():
    model = PotentialModel(1, 1.5, 0.3, 2.0)
    assert magnetic_field(model, 0.0, 0.7) == 0.0
    u = np.linspace(-5, -1e-6, 30)
    assert np.all(magnetic_field(model, u, np.zeros_like(u)) > 0)


def test_curvature_of_constant_eta_vanishes():
    K = gauss_curvature(np.full((6, 6), 0.3), 0.1)
    assert np.all(K[1:-1, 1:-1] == 0.0)


def test_energy_of_trivial_solution():
    model = PotentialModel(0, 1.0, 0.2, 2.0)
    H = energy_density(model, np.zeros((5, 5)), np.zeros((5, 5)), 0.1)
    assert np.all(H[1:-1, 1:-1] == 0.0)


def test_eta_matches_direct_formula(two_center_small):
    fld = two_center_small
    model, cfg = fld.model, fld.cfg
    x = fld.grid.points()[10, 17]
    u = fld.u[10, 17]
    prod = np.prod([np.sum((x - np.array(p)) ** 2) ** n for p, n in cfg.centers])
    direct = (model.g0 / 2) * (math.exp(math.exp(u) - u) * prod) ** (-model.a)
    assert math.exp(log_conformal_factor(model, cfg, u, x)) == pytest.approx(direct, rel=1e-12)


def test_self_dual_and_einstein(two_center_small):
    fld = two_center_small
    bound = 10 * (fld.grid.spacing**2 + DEFAULT_TOL)
    assert self_dual_deviation(fld) <= bound
    assert einstein_deviation(fld) <= bound


def test_flat_curvature_vanishes():
    fld = _solve([(0.0, 0.3)], 0.0, 33, R=8.0, stages=3)
    f = planar_fields(fld)
    assert np.nanmax(np.abs(f["Kg"])) == 0.0


def test_flux_empty():
    fld = continue_delta(PotentialModel(0, 1.0, 0.2, 2.0), StringConfiguration(()),
                         Grid.build(5.0, 17), [0.5])
    assert total_flux(fld) == 0.0


def test_flux_three_strings():
    fld = _solve([(-1.0, 0.0), (1.0, 0.0), (0.0, 1.2)], 0.25, 129)
    target = 6 * math.pi
    assert total_flux(fld) == pytest.approx(target, rel=0.01)
    assert total_flux(fld, "area") == pytest.approx(target, rel=0.01)


def test_radial_flux(radial_11):
    assert total_flux(radial_11) == pytest.approx(2 * math.pi, rel=0.01)


def test_deficit_exponent_planar(two_center_small):
    expo, r2 = deficit_exponent(two_center_small)
    assert expo == pytest.approx(2 * 0.25 * 2, rel=0.01)
    assert r2 >= 0.999


def test_deficit_exponent_radial(radial_11):
    expo, r2 = deficit_exponent(radial_11)
    assert expo == pytest.approx(2.0, rel=1e-4) and r2 >= 0.999


def test_far_field_radial(radial_11):
    rep = check_far_field_bounds(radial_11)
    assert rep["passed"]
    assert rep["checks"]["field"]["b"] == pytest.approx(math.sqrt(2))


def test_far_field_critical_pair(critical_pair):
    rep = check_far_field_bounds(critical_pair)
    assert rep["passed"]
    assert rep["checks"]["field"]["b"] == 2.0 and rep["checks"]["gradient"]["b"] == 3.0
    assert rep["checks"]["nonpositive"]["max_u"] <= 0
    assert total_flux(critical_pair) == pytest.approx(4 * math.pi, rel=0.01)


def test_far_field_ladder_reported(two_center_small):
    rep = check_far_field_bounds(two_center_small)
    rungs = {k: v for k, v in rep["checks"].items() if k.startswith("ladder")}
    assert set(rungs) == {"ladder_b2", "ladder_b4", "ladder_b6"}
    assert rungs["ladder_b2"]["asserted"] and rungs["ladder_b2"]["passed"]
    assert not rungs["ladder_b4"]["asserted"]


def test_far_field_detects_violation(two_center_small):
    fld = two_center_small
    r = fld.grid.radius
    v = np.array(fld.values)
    v[(r > 6) & (r < 7)] -= 0.5  # pushes u well below the fitted r^-2 envelope
    from cosmic_strings.planar import PlanarField
    bad = PlanarField(v, fld.cfg, fld.model, fld.grid, fld.delta, 0.0, 0)
    assert not check_far_field_bounds(bad)["passed"]


def test_observable_set(two_center_small, radial_11):
    o = compute_observables(two_center_small)
    assert np.all(o.conformal > 0)
    assert math.isfinite(o.total_flux)
    ro = compute_observables(radial_11)
    assert ro.decay_fit[0] == pytest.approx(math.sqrt(2), rel=0.02)
    assert np.all(ro.conformal > 0)
