"""Covariate-dependent Bayesian inference of Gaussian graphical models.

Observations are clustered by a covariate-dependent random partition;
each cluster carries its own graph and precision matrix, estimated
either with a G-Wishart prior under the exact Gaussian likelihood or
with spike-and-slab node-wise regressions under a pseudo-likelihood.
"""

from .model import (
    CovariatePrior,
    Dataset,
    GWishartPrior,
    Hyperparameters,
    NodeRegression,
    NotPositiveDefiniteError,
    SpikeSlabPrior,
    default_hyperparameters,
    gaussian_loglik,
    hyper_from_config,
    hyper_to_config,
    mixture_density,
    omega_to_regressions,
    partial_correlations,
    pseudo_loglik,
    validate_graph,
    validate_precision,
)
from .ppmx import (
    covariate_posterior,
    draw_covariate_params,
    log_cohesion,
    log_partition_mass,
    log_similarity,
)
from .gwishart import (
    is_decomposable,
    log_marginal_gwishart,
    log_norm_constant,
    log_norm_constant_decomposable,
    log_norm_constant_mc,
    sample_gwishart,
    update_edge_and_omega,
)
from .pseudo import (
    log_pseudo_marginal,
    reconstruct_proxy_precision,
    symmetrize,
    update_beta,
    update_edge_indicator,
    update_tau,
)
from .gibbs import (
    ChainState,
    GWishartBackend,
    PseudoBackend,
    Schedule,
    TraceStore,
    gibbs_scan,
    make_backend,
    prior_state,
    refresh_clusters,
    run_chain,
    run_pooled_chain,
    update_allocation,
    update_sticks,
)
from .summary import (
    EdgeProbabilityField,
    dahl_partition,
    dic_cov_only,
    dic_full,
    dic_graph_only,
    partition_average,
    predict_graph,
)
from .simgen import (
    SimTruth,
    example1_precision,
    example2_precision,
    example3_truth,
    generate,
)
from .traceio import TraceFormatError, load_trace, save_trace
from .seeding import substream

__version__ = "0.1.0"

__all__ = [
    "ChainState",
    "CovariatePrior",
    "Dataset",
    "EdgeProbabilityField",
    "GWishartBackend",
    "GWishartPrior",
    "Hyperparameters",
    "NodeRegression",
    "NotPositiveDefiniteError",
    "PseudoBackend",
    "Schedule",
    "SimTruth",
    "SpikeSlabPrior",
    "TraceFormatError",
    "TraceStore",
    "covariate_posterior",
    "dahl_partition",
    "default_hyperparameters",
    "dic_cov_only",
    "dic_full",
    "dic_graph_only",
    "draw_covariate_params",
    "example1_precision",
    "example2_precision",
    "example3_truth",
    "gaussian_loglik",
    "generate",
    "gibbs_scan",
    "hyper_from_config",
    "hyper_to_config",
    "is_decomposable",
    "load_trace",
    "log_cohesion",
    "log_marginal_gwishart",
    "log_norm_constant",
    "log_norm_constant_decomposable",
    "log_norm_constant_mc",
    "log_partition_mass",
    "log_pseudo_marginal",
    "log_similarity",
    "make_backend",
    "mixture_density",
    "omega_to_regressions",
    "partial_correlations",
    "partition_average",
    "predict_graph",
    "prior_state",
    "pseudo_loglik",
    "reconstruct_proxy_precision",
    "refresh_clusters",
    "run_chain",
    "run_pooled_chain",
    "sample_gwishart",
    "save_trace",
    "substream",
    "symmetrize",
    "update_allocation",
    "update_beta",
    "update_edge_and_omega",
    "update_edge_indicator",
    "update_sticks",
    "update_tau",
    "validate_graph",
    "validate_precision",
]
