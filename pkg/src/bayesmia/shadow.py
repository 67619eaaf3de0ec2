"""Shadow ensembles and threshold (tau) estimation."""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .attacks import TauEstimate
from .core import Dataset, derive_seed, draw_split
from .errors import BayesMIAError, CalibrationError, NumericalError
from .evaluation import threshold_from_cut
from .models import ModelParams, load_params, per_sample_losses, save_params, train_model


@dataclass
class ShadowEnsemble:
    models: list[ModelParams]
    masks: np.ndarray  # (K, N) bool
    pool: Dataset
    seeds: list[int]

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=bool)
        if len(self.models) < 1:
            raise CalibrationError("ensemble needs at least one shadow model")
        if self.masks.shape != (len(self.models), len(self.pool)):
            raise CalibrationError("mask matrix must be K x pool size")

    @property
    def K(self) -> int:
        return len(self.models)

    def member_counts(self) -> np.ndarray:
        return self.masks.sum(axis=0)

    def loss_matrix(self) -> np.ndarray:
        """Losses of every shadow on every pool sample, shape (K, N)."""
        return np.stack([per_sample_losses(m, self.pool) for m in self.models])


def train_shadows(pool: Dataset, K: int, member_fraction: float, seed: int, kind: str,
                  l2: float = 1.0, tol: float = 1e-8, split_mode: str = "exact",
                  threads: int = 1) -> ShadowEnsemble:
    if K < 1:
        raise CalibrationError("need K >= 1 shadow models")
    seeds = [derive_seed(seed, "shadow", k) for k in range(K)]
    splits = [draw_split(len(pool), member_fraction, s, split_mode) for s in seeds]

    def fit(k):
        try:
            return train_model(kind, pool, splits[k], l2, tol)
        except BayesMIAError as exc:
            raise type(exc)(f"shadow {k}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            models = list(ex.map(fit, range(K)))
    else:
        models = [fit(k) for k in range(K)]
    return ShadowEnsemble(models, np.stack([s.mask for s in splits]), pool, seeds)


def estimate_tau_global(ensemble: ShadowEnsemble, losses: np.ndarray | None = None) -> TauEstimate:
    """Single loss threshold maximizing membership accuracy over all (shadow, sample) pairs.

    Members are predicted for losses below the threshold.
    """
    L = ensemble.loss_matrix() if losses is None else losses
    values, members = L.ravel(), ensemble.masks.ravel()
    if np.all(values == values[0]):
        warnings.warn("all shadow losses are equal; threshold carries no information")
        return TauEstimate(value=float(values[0]), degenerate=True)
    order = np.argsort(values, kind="stable")
    v = values[order]
    c, _ = kernels.best_cut(v, members[order].astype(np.uint8), 1, 1, False)
    return TauEstimate(value=float(threshold_from_cut(v, c)))


def estimate_tau_per_sample(ensemble: ShadowEnsemble, losses: np.ndarray | None = None) -> TauEstimate:
    """Per-sample loss threshold best separating member from non-member shadows.

    The objective is balanced accuracy. An optimum at +inf is replaced by the
    largest observed loss, and one at -inf by the next float below the smallest
    loss, so thresholds stay finite without changing any decision.
    """
    L = (ensemble.loss_matrix() if losses is None else losses).T  # (N, K)
    M = ensemble.masks.T
    n_in = M.sum(axis=1)
    n_out = M.shape[1] - n_in
    bad = np.flatnonzero((n_in == 0) | (n_out == 0))
    if bad.size:
        raise CalibrationError(
            f"{bad.size} pool samples lack member or non-member shadows: {bad[:20].tolist()}", bad)
    order = np.argsort(L, axis=1, kind="stable")
    Ls = np.take_along_axis(L, order, axis=1)
    Ms = np.take_along_axis(M, order, axis=1).astype(np.uint8)
    # balanced accuracy TP/P + TN/N, scaled by P*N to stay integral
    cuts = kernels.best_cuts_rows(Ls, Ms, n_out, n_in, False)
    K = Ls.shape[1]
    idx = np.clip(cuts, 1, K - 1)
    tau = 0.5 * (Ls[np.arange(Ls.shape[0]), idx - 1] + Ls[np.arange(Ls.shape[0]), idx])
    tau = np.where(cuts == 0, np.nextafter(Ls[:, 0], -np.inf), np.where(cuts == K, Ls[:, -1], tau))
    return TauEstimate(values=tau)


def logmeanexp(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        raise NumericalError("all exponents are -inf or non-finite")
    return float(m + np.log(np.mean(np.exp(a - m))))


def monte_carlo_tau(z, sampler, temperature: float = 1.0, num_draws: int = 100_000,
                    loss=None) -> float:
    """-T log mean exp(-loss(t, z) / T) over ``num_draws`` posterior draws.

    ``sampler`` is either an object with ``draw(size)`` or an array of draws.
    ``loss(draws, z)`` defaults to the Gaussian loss.
    """
    draws = _draws(sampler, num_draws)
    losses = _losses(draws, z, loss)
    return -temperature * logmeanexp(-losses / temperature)


def monte_carlo_tau_many(Z: np.ndarray, draws: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Gaussian-loss Monte-Carlo thresholds for each row of ``Z`` sharing the same draws."""
    Z = np.atleast_2d(Z)
    out = np.empty(Z.shape[0])
    for i in range(Z.shape[0]):
        out[i] = -temperature * logmeanexp(-_losses(draws, Z[i], None) / temperature)
    return out


def posterior_mean_loss(z, sampler, num_draws: int = 100_000, loss=None) -> float:
    draws = _draws(sampler, num_draws)
    return float(np.mean(_losses(draws, z, loss)))


def _draws(sampler, num_draws):
    if num_draws < 1:
        raise ValueError("num_draws must be >= 1")
    if hasattr(sampler, "draw"):
        return sampler.draw(num_draws)
    return np.atleast_2d(np.asarray(sampler, dtype=np.float64))


def _losses(draws, z, loss):
    z = np.asarray(getattr(z, "features", z), dtype=np.float64)
    if loss is not None:
        return np.asarray(loss(draws, z), dtype=np.float64)
    r = draws - z
    return 0.5 * np.einsum("ij,ij->i", r, r)


# --- persistence ----------------------------------------------------------------------


def save_ensemble(ensemble: ShadowEnsemble, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k, model in enumerate(ensemble.models):
        name = f"shadow_{k:03d}.json"
        save_params(model, directory / name)
        files.append(name)
    manifest = {
        "K": ensemble.K,
        "pool_size": len(ensemble.pool),
        "seeds": [str(s) for s in ensemble.seeds],
        "models": files,
        "masks": ["".join("1" if b else "0" for b in row) for row in ensemble.masks],
    }
    path = directory / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return path


def load_ensemble(directory, pool: Dataset) -> ShadowEnsemble:
    directory = Path(directory)
    try:
        with open(directory / "manifest.json", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CalibrationError(f"cannot read shadow manifest in {directory}: {exc}") from exc
    models = [load_params(directory / name) for name in doc["models"]]
    masks = np.array([[ch == "1" for ch in row] for row in doc["masks"]], dtype=bool)
    return ShadowEnsemble(models, masks, pool, [int(s) for s in doc["seeds"]])

