"""Query-budgeted Bayesian optimization of fuselage shape control.

A weighted-GP UCB optimizer that buys each stage's loss estimate from either
an emulated quantum Monte Carlo estimator or Chebyshev-sized classical Monte
Carlo, run against a synthetic linear-surrogate fuselage environment.
"""

from .env import (Environment, discrete_grid, expected_observation, final_deviation,
                  make_env, mae, observe, true_loss)
from .errors import ConfigError, DomainError, FuselageQBOError, NumericalError
from .estimators import (chebyshev_queries, classical_estimate, qmc1_queries, qmc2_queries,
                         quantum_estimate_emulated)
from .optimizer import Box, OptimizerConfig, RunTrace, classic_bo_run, compute_f_star, qbo_run
from .rff import KernelSpec, features, rbf, sample_feature_map
from .wgp import PosteriorState, WeightedObservation, kernel_posterior_exact, predict, ucb_score, update

__version__ = "0.1.0"
