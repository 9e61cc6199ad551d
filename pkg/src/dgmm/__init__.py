"""Deep Gaussian mixture models fitted by stochastic EM."""

__version__ = "0.1.0"

from .data import Dataset, generate_smiley, load_csv, save_csv, standardize
from .gaussian import Gaussian, log_density, log_sum_exp, sample
from .metrics import adjusted_rand_index, misclassification_rate
from .model import (
    DgmmParams,
    DgmmSpec,
    LayerParams,
    classify,
    collapse_path,
    conditional_posterior,
    enumerate_paths,
    log_likelihood,
    marginal_components,
    path_posterior,
    sample_dgmm,
)
from .selection import SearchSpace, bic, count_params, model_search
from .sem import FitConfig, FitResult, degenerate_components, enforce_identifiability, fit
from .serialize import load_params, save_params

__all__ = [
    "Dataset", "generate_smiley", "load_csv", "save_csv", "standardize",
    "Gaussian", "log_density", "log_sum_exp", "sample",
    "adjusted_rand_index", "misclassification_rate",
    "DgmmParams", "DgmmSpec", "LayerParams", "classify", "collapse_path",
    "conditional_posterior", "enumerate_paths", "log_likelihood",
    "marginal_components", "path_posterior", "sample_dgmm",
    "SearchSpace", "bic", "count_params", "model_search",
    "FitConfig", "FitResult", "degenerate_components", "enforce_identifiability", "fit",
    "load_params", "save_params",
]
