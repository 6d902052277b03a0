"""Two-way relay channel estimation: pilots, estimators, training design.

The package simulates a pair of multi-antenna sources exchanging data
through an amplify-and-forward relay, with spatially correlated Rayleigh
fading on every link.  Estimation runs in two passes: the relay sounds the
source->relay ("backward") channels and each source forms a least-squares
estimate; the sources then sound the relay->source ("forward") compound and
each destination forms a linear MMSE estimate of both relay-side channels,
treating its own backward estimate as side information.  ``training``
optimizes the source pilot powers against an upper bound on that MMSE,
``harness`` sweeps power grids with common random numbers, and ``oracle``
holds the independent cross-checks behind the test suite.
"""

from .config import (ConfigError, ExperimentPlan, SystemConfig, VARIANT_DERIVED,
                     VARIANT_PAPER, apply_scenario, db_to_linear, load_config)
from .linalg import RngStream, dft_unitary, eigh, kron, unvec, vec
from .channel import (ChannelSet, CorrelationSet, build_correlations,
                      correlation_matrix, forward_prior_covariance,
                      sample_channels)
from .stage1 import (BackwardEstimate, RelayTraining, diagonal_relay_training,
                     ls_estimate, optimal_relay_training, simulate_stage1,
                     stage1_theoretical_mse)
from .stage2 import (ForwardEstimate, SourceTraining, approx_mse,
                     approx_mse_blockform, conditional_mse, lmmse_estimate,
                     noise_covariance, noise_floor_covariance, simulate_stage2)
from .training import (ConvergenceError, PowerAllocation, ScalarProblem,
                       allocation_objective, baseline_source_training,
                       build_scalar_problem, optimize_allocation,
                       optimized_source_training, split_unitary_rows)
from .harness import (ExperimentRecord, emit_csv, run_stage1_experiment,
                      run_stage2_experiment)

__version__ = "0.1.0"

__all__ = [
    "BackwardEstimate", "ChannelSet", "ConfigError", "ConvergenceError",
    "CorrelationSet", "ExperimentPlan", "ExperimentRecord", "ForwardEstimate",
    "PowerAllocation", "RelayTraining", "RngStream", "ScalarProblem",
    "SourceTraining", "SystemConfig", "VARIANT_DERIVED", "VARIANT_PAPER",
    "allocation_objective", "apply_scenario", "approx_mse",
    "approx_mse_blockform", "baseline_source_training", "build_correlations",
    "build_scalar_problem", "conditional_mse", "correlation_matrix",
    "db_to_linear", "dft_unitary", "diagonal_relay_training", "eigh",
    "emit_csv", "forward_prior_covariance", "kron", "lmmse_estimate",
    "load_config", "ls_estimate", "noise_covariance",
    "noise_floor_covariance", "optimal_relay_training",
    "optimize_allocation", "optimized_source_training",
    "run_stage1_experiment", "run_stage2_experiment", "sample_channels",
    "simulate_stage1", "simulate_stage2", "split_unitary_rows",
    "stage1_theoretical_mse", "unvec", "vec",
]
