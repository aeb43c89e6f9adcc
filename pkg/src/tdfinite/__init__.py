"""Temporal-difference learning with linear features on finite Markov chains:
exact limit points, finite-time bounds, and seeded Monte Carlo checks."""
from ._kernels import backend as kernel_backend
from .errors import (ConfigError, DegenerateFeatures, GenerationFailure, NoConvergence,
                     NotErgodic, SolveFailure, TDFiniteError)
from .mrp import (FeatureMap, Instance, MarkovRewardProcess, SteadyStateGeometry,
                  bellman_T, bellman_T_lambda, d_norm, expected_reward, instance_from_json,
                  normalize_features, project_D, stationary_distribution,
                  steady_state_geometry, true_value_function)
from .stopping import OptimalStoppingProblem

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateFeatures", "FeatureMap", "GenerationFailure", "Instance",
    "MarkovRewardProcess", "NoConvergence", "NotErgodic", "OptimalStoppingProblem",
    "SolveFailure", "SteadyStateGeometry", "TDFiniteError", "bellman_T", "bellman_T_lambda",
    "d_norm", "expected_reward", "instance_from_json", "kernel_backend", "normalize_features",
    "project_D", "stationary_distribution", "steady_state_geometry", "true_value_function",
]
