"""Bayes-optimal membership inference: loss-threshold, sample-threshold and Taylor attacks."""

__version__ = "0.1.0"

from .attacks import (
    TauEstimate,
    gaussian_optimal_score,
    gaussian_tau_closed_form,
    gaussian_tau_global,
    malt_score,
    mast_score,
    matt_full_score,
    matt_score,
    zero_one_score,
)
from .core import (
    Dataset,
    ExperimentConfig,
    Sample,
    SplitSpec,
    draw_split,
    gen_gaussian_dataset,
    gen_two_class_features,
    read_dataset,
    write_dataset,
)
from .evaluation import (
    AttackReport,
    ScoreRecord,
    best_threshold_accuracy,
    dp_membership_bound,
    mean_average_precision,
    membership_privacy_bound,
    sigmoid_lipschitz_check,
    zero_one_accuracy_formula,
)
from .experiment import Experiment, run_experiment
from .kernels import BACKEND
from .models import (
    ModelParams,
    gaussian_loss,
    gaussian_posterior_sampler,
    logreg_loss,
    train_gaussian_mean,
    train_logreg,
)
from .shadow import (
    ShadowEnsemble,
    estimate_tau_global,
    estimate_tau_per_sample,
    monte_carlo_tau,
    train_shadows,
)

__all__ = [
    "AttackReport", "BACKEND", "Dataset", "Experiment", "ExperimentConfig", "ModelParams", "Sample",
    "ScoreRecord", "ShadowEnsemble", "SplitSpec", "TauEstimate", "best_threshold_accuracy",
    "dp_membership_bound", "draw_split", "estimate_tau_global", "estimate_tau_per_sample",
    "gaussian_loss", "gaussian_optimal_score", "gaussian_posterior_sampler", "gaussian_tau_closed_form",
    "gaussian_tau_global", "gen_gaussian_dataset", "gen_two_class_features", "logreg_loss", "malt_score",
    "mast_score", "matt_full_score", "matt_score", "mean_average_precision", "membership_privacy_bound",
    "monte_carlo_tau", "read_dataset", "run_experiment", "sigmoid_lipschitz_check", "train_gaussian_mean",
    "train_logreg", "train_shadows", "write_dataset", "zero_one_accuracy_formula", "zero_one_score",
]
