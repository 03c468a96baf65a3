"""Model checking of time-bounded until properties of reaction networks.

A population CTMC is approximated by a Gaussian whose mean and covariance
follow normal moment-closure equations. At each point of a time grid the
Gaussian is split into target, undetermined and false regions; the target
mass increments the first-passage CDF and the Gaussian is conditioned on the
undetermined region by assumed density filtering.

Exact uniformisation (:mod:`mcsbi.cme`) and Gillespie simulation
(:mod:`mcsbi.ssa`) provide reference answers.
"""
from .cme import ExactCdf, build_oracle, exact_cme_cdf, state_space_size
from .engine import EngineConfig, FptResult, Grid, check_path_formula, check_until
from .errors import (
    IntegrationError, McsbiError, ModelSyntaxError, NumericAccuracyError, PropensityError,
    PropertySyntaxError, RegionLimitError, StateSpaceError, StiffnessError,
)
from .gaussian import GaussianConfig, GaussianDist, adf_update, mvn_cdf, region_prob
from .model import BUILTIN_MODELS, ReactionNetwork, builtin_model, load_model, parse_model
from .moments import MomentState, integrate, moment_field, normal_closure, raw_moment_equations
from .presets import PRESETS
from .properties import compile_regions, parse_property
from .ssa import EmpiricalCdf, estimate_cdf, monitor_until, simulate

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_MODELS", "PRESETS", "EmpiricalCdf", "EngineConfig", "ExactCdf", "FptResult",
    "GaussianConfig", "GaussianDist", "Grid", "IntegrationError", "McsbiError", "ModelSyntaxError",
    "MomentState", "NumericAccuracyError", "PropensityError", "PropertySyntaxError",
    "ReactionNetwork", "RegionLimitError", "StateSpaceError", "StiffnessError", "adf_update",
    "build_oracle", "builtin_model", "check_path_formula", "check_until", "compile_regions",
    "estimate_cdf", "exact_cme_cdf", "integrate", "load_model", "moment_field", "monitor_until",
    "mvn_cdf", "normal_closure", "parse_model", "parse_property", "raw_moment_equations",
    "region_prob", "simulate", "state_space_size",
]
