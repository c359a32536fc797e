"""Scalable spatio-temporal GP inference in state-space form."""

from .cvi import (ApproxLikelihoodBank, FitOptions, FitState, FullModelFit,
                  cvi_step, elbo, fit, posterior, predict)
from .data import (GridDataset, kfold_masks, load_csv, metrics, save_csv,
                   synthesize)
from .errors import (CapacityError, DataError, DefinitenessError, DomainError,
                     NumericalError, StgpError, UnsupportedKernelError,
                     UsageError)
from .gaussians import GaussianParams, KroneckerMatrix, convert_params, kron
from .kernels import (DiscreteSTModel, MarkovKernelSS, SpatialKernel,
                      assemble_full, assemble_sparse, build_temporal_ss,
                      discretize, spatial_gram, temporal_gram)
from .likelihoods import Bernoulli, Gaussian, Poisson, expected_log_lik, nlpd
from .mean_field import (MFModel, MFModelFit, mf_elbo, mf_fit,
                         mf_filter_smoother, mf_posterior, mf_predict,
                         reformulate)
from .sparse import (BlockApproxLikelihood, SparseModelFit, SparseProjection,
                     build_projection, init_inducing, sparse_cvi_step,
                     sparse_elbo, sparse_fit, sparse_marginal, sparse_predict)
from .state_space import (FilterResult, PseudoObservations, StateMarginals,
                          associative_scan, parallel_filter,
                          parallel_smoother, rts_smoother, sequential_filter)

__version__ = "0.1.0"

__all__ = [
    "ApproxLikelihoodBank", "Bernoulli", "BlockApproxLikelihood",
    "CapacityError", "DataError", "DefinitenessError", "DiscreteSTModel",
    "DomainError", "FilterResult", "FitOptions", "FitState", "FullModelFit",
    "Gaussian", "GaussianParams", "GridDataset", "KroneckerMatrix", "MFModel",
    "MFModelFit", "MarkovKernelSS", "NumericalError", "Poisson",
    "PseudoObservations", "SparseModelFit", "SparseProjection",
    "SpatialKernel", "StateMarginals", "StgpError", "UnsupportedKernelError",
    "UsageError", "assemble_full", "assemble_sparse", "associative_scan",
    "build_projection", "build_temporal_ss", "convert_params", "cvi_step",
    "discretize", "elbo", "expected_log_lik", "fit", "init_inducing",
    "kfold_masks", "kron", "load_csv", "metrics", "mf_elbo", "mf_fit",
    "mf_filter_smoother", "mf_posterior", "mf_predict", "nlpd",
    "parallel_filter", "parallel_smoother", "posterior", "predict",
    "reformulate", "rts_smoother", "save_csv", "sequential_filter",
    "sparse_cvi_step", "sparse_elbo", "sparse_fit", "sparse_marginal",
    "sparse_predict", "spatial_gram", "synthesize", "temporal_gram",
]
