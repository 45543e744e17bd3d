"""Bayesian compositional regression with clustered, sparse, sum-to-zero coefficients."""

from .constrained_gaussian import (
    GaussianParams,
    HyperplaneConstraint,
    conditional_moments,
    sample_hyperplane_gaussian,
)
from .estimator import BraceRegressor
from .exceptions import BraceError, InvalidInputError, NumericalError
from .gibbs import (
    ChainConfig,
    ChainTrace,
    GibbsState,
    Hyperparams,
    init_state,
    run_chain,
    update_concentration,
    update_labels,
    update_theta,
    update_variances,
)
from .marginal import ClusterFrequencies, cluster_frequencies, log_det_B, log_marginal_y
from .metrics import EvalReport, adjusted_rand_index, evaluate, l2_loss, prediction_error, selection_errors
from .preprocessing import (
    CountMatrix,
    Dataset,
    LogRelativeAbundance,
    center,
    filter_features,
    to_log_relative_abundance,
)
from .simulation import SimConfig, SimulationTruth, simulate_dataset
from .summary import (
    PosteriorSummary,
    coclustering_matrix,
    credible_interval_select,
    point_partition,
    summarize,
)

__all__ = [
    "BraceError", "BraceRegressor", "ChainConfig", "ChainTrace", "ClusterFrequencies",
    "CountMatrix", "Dataset", "EvalReport", "GaussianParams", "GibbsState", "Hyperparams",
    "HyperplaneConstraint", "InvalidInputError", "LogRelativeAbundance", "NumericalError",
    "PosteriorSummary", "SimConfig", "SimulationTruth", "adjusted_rand_index", "center",
    "cluster_frequencies", "coclustering_matrix", "conditional_moments", "credible_interval_select",
    "evaluate", "filter_features", "init_state", "l2_loss", "log_det_B", "log_marginal_y",
    "point_partition", "prediction_error", "run_chain", "sample_hyperplane_gaussian",
    "selection_errors", "simulate_dataset", "summarize", "to_log_relative_abundance",
    "update_concentration", "update_labels", "update_theta", "update_variances",
]
