import numpy as np
import pytest

from cosmic_strings import PotentialModel, StringConfiguration, solve_radial
from cosmic_strings.planar import Grid, auto_g0, continue_delta, default_schedule


@pytest.fixture(scope="session")
def radial_11():
    return solve_radial(PotentialModel.critical(1, 1.0))


@pytest.fixture(scope="session")
def two_center_small():
    """N = 2, aN = 0.5 on a coarse grid with a short schedule (seconds)."""
    cfg = StringConfiguration.from_points([(-1.0, 0.0), (1.0, 0.0)])
    grid = Grid.build(12.0, 65, cfg)
    sched = default_schedule(8)
    base = PotentialModel(N=2, m=1.0, a=0.25, g0=1.0)
    model = base.with_g0(auto_g0(base, cfg, grid, sched))
    return continue_delta(model, cfg, grid, sched)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
