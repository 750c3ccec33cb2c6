"""Bayesian latent-variable model linking a biomarker panel to food intake."""

__version__ = "0.1.0"

from .model import Dataset, Hyperparameters, ModelState, derive_hyperparameters, validate_dataset
from .predict import sample_predictive
from .sampler import PosteriorChain, SamplerConfig, fit, run_chain

__all__ = [
    "Dataset",
    "Hyperparameters",
    "ModelState",
    "PosteriorChain",
    "SamplerConfig",
    "derive_hyperparameters",
    "fit",
    "run_chain",
    "sample_predictive",
    "validate_dataset",
    "__version__",
]
