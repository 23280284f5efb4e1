"""Self-dual cosmic strings for the generalized potential w(s) = 1 - s**m.

Planar multi-center solutions are computed by monotone iteration with
delta-regularized backgrounds; critical-coupling coincident strings by a
log-radius reduction with a fixed-point seed and first-integral march.
"""

from .model import PotentialModel, calibrate_g0, decay_exponent
from .background import StringConfiguration, RegularizationParam
from .planar import Grid, PlanarField, solve_regularized, continue_delta
from .radial import RadialProfile, SeedState, fixed_point_seed, first_integral_march, solve_radial
from .observables import ObservableSet, compute_observables, total_flux
from .config import JobConfig, parse_config, serialize_config

__all__ = [
    "PotentialModel",
    "calibrate_g0",
    "decay_exponent",
    "StringConfiguration",
    "RegularizationParam",
    "Grid",
    "PlanarField",
    "solve_regularized",
    "continue_delta",
    "RadialProfile",
    "SeedState",
    "fixed_point_seed",
    "first_integral_march",
    "solve_radial",
    "ObservableSet",
    "compute_observables",
    "total_flux",
    "JobConfig",
    "parse_config",
    "serialize_config",
]

__version__ = "0.1.0"
