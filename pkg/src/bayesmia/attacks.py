"""Membership scores. Higher score means more likely a training member.

Constant offsets (the global MALT threshold, the normalization constant of
the Gaussian calibration term, the prior log-odds) are left out of every
score; they are absorbed when a threshold is chosen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, Sample
from .errors import CalibrationError, ModelError, UnsupportedError
from .models import (
    ModelParams,
    gaussian_loss,
    logreg_logits,
    logreg_loss,
    per_sample_gradients,
    per_sample_losses,
)


@dataclass
class TauEstimate:
    """Per-sample thresholds ``values`` (aligned with a dataset) or one ``value``."""

    values: np.ndarray | None = None
    value: float | None = None
    degenerate: bool = False

    def __post_init__(self):
        if (self.values is None) == (self.value is None):
            raise CalibrationError("TauEstimate needs exactly one of values / value")
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=np.float64)
            if not np.all(np.isfinite(self.values)):
                raise CalibrationError("per-sample thresholds must be finite")

    @property
    def per_sample(self) -> bool:
        return self.values is not None

    def for_index(self, i: int) -> float:
        if self.values is None:
            return float(self.value)
        if not 0 <= i < self.values.size:
            raise CalibrationError(f"no threshold for sample {i}", [i])
        return float(self.values[i])


def sample_loss(theta: ModelParams, z: Sample) -> float:
    if theta.kind == "gaussian_mean":
        return gaussian_loss(theta, z)
    report = logreg_loss(theta, z, l2=0.0)
    return report.loss


# --- single-sample scores ---------------------------------------------------------


def zero_one_score(theta: ModelParams, z: Sample) -> float:
    if theta.kind != "logistic_regression":
        raise UnsupportedError("the 0-1 attack needs a classifier")
    pred = int(logreg_logits(theta, np.asarray(z.features)[None, :])[0] >= 0)
    return float(pred == z.label)


def malt_score(theta: ModelParams, z: Sample) -> float:
    return -sample_loss(theta, z)


def mast_score(theta: ModelParams, z: Sample, tau: float | TauEstimate, index: int | None = None) -> float:
    if isinstance(tau, TauEstimate):
        if tau.per_sample and index is None:
            raise CalibrationError("per-sample thresholds need the sample index")
        tau = tau.for_index(index if index is not None else 0)
    if tau is None or not np.isfinite(tau):
        raise CalibrationError("missing threshold for sample")
    return float(tau) - sample_loss(theta, z)


def gaussian_tau_closed_form(z, mu, n_prime: int):
    """n'/(2(n'+1)) |z - mu|^2 for one sample or for each row of a matrix."""
    if n_prime < 1:
        raise ModelError("n_prime must be >= 1")
    z = np.asarray(getattr(z, "features", z), dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if z.shape[-1] != mu.shape[-1]:
        raise ModelError("dimension mismatch between z and mu")
    r = z - mu
    sq = np.einsum("...j,...j->...", r, r)
    out = n_prime / (2.0 * (n_prime + 1)) * sq
    return float(out) if np.ndim(out) == 0 else out


def gaussian_tau_global(n_prime: int, d: int) -> float:
    """Expected closed-form threshold over z ~ N(mu, I)."""
    return n_prime * d / (2.0 * (n_prime + 1))


def gaussian_optimal_score(theta: ModelParams, z: Sample, mu, n_prime: int) -> float:
    if theta.temperature != 1.0:
        raise UnsupportedError("closed-form optimal score only defined at T = 1")
    return gaussian_tau_closed_form(z, mu, n_prime) - gaussian_loss(theta, z)


def _check_pair(theta: ModelParams, theta0: ModelParams):
    if theta.kind != theta0.kind or theta.theta.shape != theta0.theta.shape:
        raise ModelError("theta and theta0 must come from the same model family and dimension")


def _grad_at(theta0: ModelParams, z: Sample) -> np.ndarray:
    data = Dataset(np.asarray(z.features, dtype=np.float64)[None, :], [z.label],
                   max(2, z.label + 1) if theta0.kind == "logistic_regression" else 1)
    return per_sample_gradients(theta0, data)[0]


def matt_score(theta: ModelParams, theta0: ModelParams, z: Sample) -> float:
    _check_pair(theta, theta0)
    return -float((theta.theta - theta0.theta) @ _grad_at(theta0, z))


def matt_full_score(theta: ModelParams, theta0: ModelParams, z: Sample, hessian_inverse_vector_product) -> float:
    _check_pair(theta, theta0)
    g = _grad_at(theta0, z)
    first = -float((theta.theta - theta0.theta) @ g)
    return first - 0.5 * float(g @ hessian_inverse_vector_product(g))


# --- batch scores over a dataset --------------------------------------------------


def zero_one_scores(theta: ModelParams, data: Dataset) -> np.ndarray:
    if theta.kind != "logistic_regression":
        raise UnsupportedError("the 0-1 attack needs a classifier")
    pred = (logreg_logits(theta, data.X) >= 0).astype(np.int64)
    return (pred == data.y).astype(np.float64)


def malt_scores(theta: ModelParams, data: Dataset) -> np.ndarray:
    return -per_sample_losses(theta, data)


def mast_scores(theta: ModelParams, data: Dataset, tau: TauEstimate) -> np.ndarray:
    if tau.per_sample:
        if tau.values.size != len(data):
            raise CalibrationError("per-sample thresholds do not match the dataset size")
        return tau.values - per_sample_losses(theta, data)
    return tau.value - per_sample_losses(theta, data)


def gaussian_optimal_scores(theta: ModelParams, data: Dataset, mu, n_prime: int) -> np.ndarray:
    if theta.temperature != 1.0:
        raise UnsupportedError("closed-form optimal score only defined at T = 1")
    return gaussian_tau_closed_form(data.X, mu, n_prime) - per_sample_losses(theta, data)


def matt_terms(theta: ModelParams, theta0: ModelParams, data: Dataset, hvp=None):
    """First-order MATT term per sample and, if ``hvp`` is given, the -g'H^-1 g / 2 term."""
    _check_pair(theta, theta0)
    G = per_sample_gradients(theta0, data)
    first = -G @ (theta.theta - theta0.theta)
    if hvp is None:
        return first, None
    second = -0.5 * np.einsum("ij,ji->i", G, hvp(G.T))
    return first, second


def matt_scores(theta: ModelParams, theta0: ModelParams, data: Dataset) -> np.ndarray:
    return matt_terms(theta, theta0, data)[0]


def matt_full_scores(theta: ModelParams, theta0: ModelParams, data: Dataset, hvp) -> np.ndarray:
    first, second = matt_terms(theta, theta0, data, hvp)
    return first + second


def hessian_shift_terms(theta0: np.ndarray, theta1: np.ndarray, H0: np.ndarray, H1: np.ndarray):
    """Error terms of replacing H1 by H0 in the Gaussian log-ratio.

    Returns ``(delta1, delta2)`` with ``delta1 = -log(det H1 / det H0) / 2`` and
    ``delta2 = (theta1 - theta0)' (H1 - H0) (theta1 - theta0)``.
    """
    s1, ld1 = np.linalg.slogdet(H1)
    s0, ld0 = np.linalg.slogdet(H0)
    if s1 <= 0 or s0 <= 0:
        raise ModelError("Hessians must be positive definite")
    diff = np.asarray(theta1) - np.asarray(theta0)
    return -0.5 * (ld1 - ld0), float(diff @ (H1 - H0) @ diff)
