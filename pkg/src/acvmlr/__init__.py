"""Approximate leave-one-out cross-validation for sparse multinomial logistic regression."""

from .acv import AcvResult, acv
from .binomial import acv_logit, fit_logit
from .datagen import SynthSpec, gen_dataset, gen_true_weights, generate, rescale_by_class
from .literalcv import literal_cv, normalized_error_difference
from .model import Dataset, active_set, training_error
from .saacv import saacv, saacv_fixed_point
from .solver import FitResult, HyperParams, fit, fit_path, lambda_grid, lambda_max
from .sweep import run_sweep

__version__ = "0.1.0"

__all__ = [
    "AcvResult", "Dataset", "FitResult", "HyperParams", "SynthSpec",
    "acv", "acv_logit", "active_set", "fit", "fit_logit", "fit_path",
    "gen_dataset", "gen_true_weights", "generate", "lambda_grid", "lambda_max",
    "literal_cv", "normalized_error_difference", "rescale_by_class", "run_sweep",
    "saacv", "saacv_fixed_point", "training_error",
]
