"""Gaussian mean estimator and L2-regularized binary logistic regression.

Logistic parameters are ``theta = [w_1, ..., w_d, b]``; the bias is penalized
together with the weights so the total Hessian is bounded below by ``l2 * I``.
Attack losses use the per-sample cross-entropy alone. The ``l2 / (2 n')``
penalty share is only added when a :class:`LossReport` is requested, so that
summing reports over the members gives back the trained objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import Dataset, Sample, SplitSpec, make_rng
from .errors import ModelError, NumericalError, TrainingError, UnsupportedError


@dataclass
class ModelParams:
    theta: np.ndarray
    kind: str
    temperature: float = 1.0
    l2: float = 0.0
    n_train: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).ravel()
        if self.kind not in ("gaussian_mean", "logistic_regression"):
            raise ModelError(f"unknown model kind {self.kind!r}")
        if not np.all(np.isfinite(self.theta)):
            raise ModelError("non-finite parameters")
        if not self.temperature > 0:
            raise ModelError("temperature must be > 0")

    @property
    def d(self) -> int:
        """Feature dimension."""
        return self.theta.size - (self.kind == "logistic_regression")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "T": self.temperature,
            "l2": self.l2,
            "n_train": self.n_train,
            "theta": self.theta.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelParams":
        try:
            p = cls(np.array(doc["theta"], dtype=np.float64), doc["kind"], float(doc["T"]),
                    float(doc.get("l2", 0.0)), int(doc.get("n_train", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed parameter document: {exc}") from exc
        if p.d != int(doc["d"]):
            raise ModelError("parameter vector does not match declared dimension")
        return p


def save_params(params: ModelParams, path) -> None:
    # json writes the shortest repr of each float, which round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params.to_dict(), fh, indent=1)
        fh.write("\n")


def load_params(path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        return ModelParams.from_dict(json.load(fh))


@dataclass
class LossReport:
    loss: float
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None


def _check_dim(params: ModelParams, X: np.ndarray) -> None:
    if X.shape[-1] != params.d:
        raise ModelError(f"feature dimension {X.shape[-1]} does not match model dimension {params.d}")


def _require(params: ModelParams, kind: str) -> None:
    if params.kind != kind:
        raise ModelError(f"expected a {kind} model, got {params.kind}")


# --- Gaussian mean ---------------------------------------------------------------


def gaussian_loss(params: ModelParams, z: Sample) -> float:
    _require(params, "gaussian_mean")
    x = np.asarray(z.features, dtype=np.float64)
    _check_dim(params, x)
    r = x - params.theta
    return 0.5 * float(r @ r)


def gaussian_losses(params: ModelParams, X: np.ndarray) -> np.ndarray:
    _require(params, "gaussian_mean")
    _check_dim(params, X)
    r = X - params.theta
    return 0.5 * np.einsum("ij,ij->i", r, r)


def train_gaussian_mean(data: Dataset, split: SplitSpec, temperature: float = 1.0) -> ModelParams:
    if len(split) != len(data):
        raise ModelError("split length does not match dataset")
    n_prime = split.n_members
    if n_prime == 0:
        raise TrainingError("empty training set: no member samples")
    theta = data.X[split.mask].mean(axis=0)
    return ModelParams(theta, "gaussian_mean", temperature, 0.0, n_prime)


class GaussianPosterior:
    """Exact posterior N(member mean, I / n') of the Gaussian mean model at T = 1."""

    def __init__(self, data: Dataset, split: SplitSpec, seed: int, temperature: float = 1.0):
        if temperature != 1.0:
            raise UnsupportedError("closed-form Gaussian posterior only implemented at T = 1")
        params = train_gaussian_mean(data, split)
        self.center = params.theta
        self.n_prime = params.n_train
        self.scale = 1.0 / np.sqrt(self.n_prime)
        self._rng = make_rng(seed)

    def draw(self, size: int) -> np.ndarray:
        return self.center + self.scale * self._rng.standard_normal((size, self.center.size))

    def __iter__(self):
        while True:
            yield self.draw(1)[0]


def gaussian_posterior_sampler(data: Dataset, split: SplitSpec, seed: int,
                               temperature: float = 1.0) -> GaussianPosterior:
    return GaussianPosterior(data, split, seed, temperature)


# --- logistic regression ---------------------------------------------------------


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _sigmoid(u):
    # split by sign so neither branch overflows
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logreg_logits(params: ModelParams, X: np.ndarray) -> np.ndarray:
    _require(params, "logistic_regression")
    _check_dim(params, X)
    return X @ params.theta[:-1] + params.theta[-1]


def logreg_losses(params: ModelParams, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample cross-entropy ``-log p_theta(y | x)``."""
    u = logreg_logits(params, X)
    sign = np.where(np.asarray(y) == 1, -1.0, 1.0)
    return np.logaddexp(0.0, sign * u)


def logreg_gradients(params: ModelParams, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample cross-entropy gradients, shape (n, d + 1)."""
    r = _sigmoid(logreg_logits(params, X)) - y
    return r[:, None] * _augment(X)


def logreg_loss(params: ModelParams, z: Sample, l2: float | None = None,
                n_alloc: int | None = None) -> LossReport:
    """Loss, gradient and Hessian of one sample, including its penalty share."""
    _require(params, "logistic_regression")
    x = np.asarray(z.features, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ModelError("non-finite features")
    if z.label not in (0, 1):
        raise UnsupportedError("only binary logistic regression is implemented")
    l2 = params.l2 if l2 is None else l2
    n_alloc = n_alloc or max(params.n_train, 1)
    xa = np.append(x, 1.0)
    theta = params.theta
    _check_dim(params, x)
    u = float(xa @ theta)
    ce = float(np.logaddexp(0.0, -u if z.label == 1 else u))
    p = float(_sigmoid(u))
    share = l2 / n_alloc
    loss = ce + 0.5 * share * float(theta @ theta)
    grad = (p - z.label) * xa + share * theta
    hess = p * (1.0 - p) * np.outer(xa, xa) + share * np.eye(theta.size)
    return LossReport(loss, grad, hess)


def logreg_objective(theta: np.ndarray, Xa: np.ndarray, y: np.ndarray, l2: float):
    """Total member objective sum CE + (l2/2)|theta|^2 with gradient and Hessian."""
    u = Xa @ theta
    p = _sigmoid(u)
    sign = np.where(y == 1, -1.0, 1.0)
    f = np.logaddexp(0.0, sign * u).sum() + 0.5 * l2 * theta @ theta
    g = Xa.T @ (p - y) + l2 * theta
    H = (Xa * (p * (1.0 - p))[:, None]).T @ Xa + l2 * np.eye(theta.size)
    return f, g, H


def logreg_member_hessian(params: ModelParams, X: np.ndarray, y: np.ndarray, l2: float | None = None):
    _require(params, "logistic_regression")
    l2 = params.l2 if l2 is None else l2
    return logreg_objective(params.theta, _augment(X), np.asarray(y, dtype=np.float64), l2)[2]


def train_logreg(data: Dataset, split: SplitSpec, l2: float, tol: float = 1e-8,
                 max_iter: int = 100, temperature: float = 1.0) -> ModelParams:
    """Damped Newton from theta = 0 on the member objective.

    Stops once the full gradient norm is below ``tol``. Same inputs give
    bit-identical parameters.
    """
    if not l2 > 0:
        raise ModelError("l2 must be > 0 for a unique minimizer")
    if len(split) != len(data):
        raise ModelError("split length does not match dataset")
    if data.num_classes > 2 or data.y.max() > 1:
        raise UnsupportedError("only binary logistic regression is implemented")
    X, y = data.X[split.mask], data.y[split.mask].astype(np.float64)
    if X.shape[0] == 0 or len(np.unique(y)) < 2:
        raise TrainingError("need at least one member sample of each class")
    Xa = _augment(X)
    theta = np.zeros(Xa.shape[1])
    f, g, H = logreg_objective(theta, Xa, y, l2)
    gnorm = float(np.linalg.norm(g))
    for _ in range(max_iter):
        if gnorm <= tol:
            break
        step = np.linalg.solve(H, -g)
        slope = float(g @ step)
        t = 1.0
        while True:
            cand = theta + t * step
            f_new, g_new, H_new = logreg_objective(cand, Xa, y, l2)
            # slack of a few ulps of f lets Newton finish inside rounding noise
            if f_new <= f + 1e-4 * t * slope + 1e-12 * abs(f) or t < 1e-10:
                break
            t *= 0.5
        theta, f, g, H = cand, f_new, g_new, H_new
        gnorm = float(np.linalg.norm(g))
    if not gnorm <= tol:
        raise TrainingError(f"Newton did not reach gradient norm {tol:g} in {max_iter} iterations "
                            f"(final {gnorm:.3e})", grad_norm=gnorm)
    return ModelParams(theta, "logistic_regression", temperature, l2, X.shape[0])


def logreg_predict(params: ModelParams, X: np.ndarray) -> np.ndarray:
    return (logreg_logits(params, X) >= 0).astype(np.int64)


# --- dispatch ----------------------------------------------------------------------


def per_sample_losses(params: ModelParams, data: Dataset) -> np.ndarray:
    if params.kind == "gaussian_mean":
        return gaussian_losses(params, data.X)
    return logreg_losses(params, data.X, data.y)


def per_sample_gradients(params: ModelParams, data: Dataset) -> np.ndarray:
    if params.kind == "gaussian_mean":
        _check_dim(params, data.X)
        return params.theta - data.X
    return logreg_gradients(params, data.X, data.y)


def member_hessian(params: ModelParams, data: Dataset, mask: np.ndarray) -> np.ndarray:
    """Hessian of the total member objective at ``params``."""
    if params.kind == "gaussian_mean":
        return float(np.count_nonzero(mask)) * np.eye(params.theta.size)
    return logreg_member_hessian(params, data.X[mask], data.y[mask])


def train_model(kind: str, data: Dataset, split: SplitSpec, l2: float = 1.0, tol: float = 1e-8,
                temperature: float = 1.0) -> ModelParams:
    if kind == "gaussian_mean":
        return train_gaussian_mean(data, split, temperature)
    if kind == "logistic_regression":
        return train_logreg(data, split, l2, tol, temperature=temperature)
    raise ModelError(f"unknown model kind {kind!r}")


def hessian_solver(H: np.ndarray):
    """Return v -> H^{-1} v via a Cholesky factorization; fails if H is not PD."""
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Hessian is not positive definite") from exc

    def solve(v):
        return np.linalg.solve(L.T, np.linalg.solve(L, v))

    return solve
