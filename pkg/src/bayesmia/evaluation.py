"""Attack metrics and membership-privacy bounds.

Scores follow one convention throughout: higher means "more likely a member",
and a threshold ``tau`` predicts member iff ``score >= tau``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .core import make_rng
from .errors import EvaluationError


@dataclass(frozen=True)
class ScoreRecord:
    index: int
    score: float
    truth: bool


def records_to_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    records = list(records)
    scores = np.array([r.score for r in records], dtype=np.float64)
    truth = np.array([bool(r.truth) for r in records], dtype=bool)
    return scores, truth


def _validate(scores, truth):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if scores.shape != truth.shape:
        raise EvaluationError("scores and truth differ in length")
    if not np.all(np.isfinite(scores)):
        raise EvaluationError("scores must be finite")
    return scores, truth


def threshold_from_cut(sorted_values: np.ndarray, c: int) -> float:
    n = sorted_values.shape[0]
    if c == 0:
        return -math.inf
    if c == n:
        return math.inf
    return 0.5 * (sorted_values[c - 1] + sorted_values[c])


def best_threshold_accuracy(scores, truth) -> tuple[float, float]:
    """Peak accuracy over thresholds at midpoints between distinct scores and +-inf.

    Ties between thresholds resolve to the smallest one.
    """
    scores, truth = _validate(scores, truth)
    if truth.all() or not truth.any():
        raise EvaluationError("need at least one member and one non-member")
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    c, correct = kernels.best_cut(s, truth[order].astype(np.uint8), 1, 1, True)
    return threshold_from_cut(s, c), correct / scores.size


def accuracy_at(scores, truth, threshold: float) -> float:
    scores, truth = _validate(scores, truth)
    return float(np.mean((scores >= threshold) == truth))


def cross_validated_accuracy(scores, truth, folds: int = 5, seed: int = 0) -> float:
    """Accuracy when each fold is thresholded at the peak threshold of the others."""
    scores, truth = _validate(scores, truth)
    n = scores.size
    folds = min(folds, n)
    assignment = make_rng(seed).permutation(n) % folds
    correct = 0
    for k in range(folds):
        test = assignment == k
        train = ~test
        if truth[train].all() or not truth[train].any():
            tau = 0.5 * (scores.min() + scores.max())
        else:
            tau, _ = best_threshold_accuracy(scores[train], truth[train])
        correct += int(np.sum((scores[test] >= tau) == truth[test]))
    return correct / n


def mean_average_precision(scores, truth, positive: str = "member") -> float:
    """Average precision of the ranking by score.

    For ``positive="nonmember"`` the scores are negated and held-out samples
    are the positives.
    """
    scores, truth = _validate(scores, truth)
    if positive == "member":
        pos = truth
    elif positive == "nonmember":
        scores, pos = -scores, ~truth
    else:
        raise EvaluationError(f"positive must be 'member' or 'nonmember', got {positive!r}")
    if not pos.any():
        raise EvaluationError("no positives to rank")
    order = np.argsort(-scores, kind="stable")
    return float(kernels.average_precision_desc(scores[order], pos[order].astype(np.uint8)))


def zero_one_accuracy(correct, truth) -> float:
    """Accuracy of predicting 'member' exactly for correctly classified samples."""
    correct = np.asarray(correct, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    return float(np.mean(correct == truth))


def zero_one_accuracy_formula(lam: float, p_train: float, p_test: float) -> float:
    for name, v in (("lambda", lam), ("p_train", p_train), ("p_test", p_test)):
        if not 0.0 <= v <= 1.0:
            raise EvaluationError(f"{name} must lie in [0, 1], got {v}")
    return lam * p_train + (1.0 - lam) * (1.0 - p_test)


def sigmoid(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def prior_log_odds(lam: float) -> float:
    return math.log(lam / (1.0 - lam))


def posterior_probability(score: float, lam: float) -> float:
    """Membership posterior sigma(s + t_lambda) for a calibrated score ``s``."""
    return sigmoid(score + prior_log_odds(lam))


def dp_membership_bound(epsilon: float, lam: float) -> float:
    """Upper bound on P(member | theta, z) under epsilon-differential privacy."""
    if epsilon < 0:
        raise EvaluationError("epsilon must be >= 0")
    _check_lambda(lam)
    return min(1.0, lam + epsilon / 4.0)


def membership_privacy_bound(epsilon: float, delta: float, temperature: float, lam: float) -> float:
    """Upper bound on P(member | theta, z) under (epsilon, delta)-membership privacy."""
    if epsilon < 0:
        raise EvaluationError("epsilon must be >= 0")
    if not 0.0 <= delta <= 1.0:
        raise EvaluationError("delta must lie in [0, 1]")
    if not temperature > 0:
        raise EvaluationError("temperature must be > 0")
    _check_lambda(lam)
    return min(1.0, lam + epsilon / (4.0 * temperature) + delta)


def _check_lambda(lam):
    if not 0.0 <= lam <= 1.0:
        raise EvaluationError("lambda must lie in [0, 1]")


def sigmoid_lipschitz_check(u: float, v: float) -> bool:
    return sigmoid(u) <= sigmoid(v) + max(u - v, 0.0) / 4.0 + 1e-12


@dataclass
class AttackReport:
    attack: str
    threshold: float
    accuracy: float
    map_train: float
    map_test: float
    n: int
    seed: int
    cv_accuracy: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("threshold",):
            if math.isinf(doc[key]):
                doc[key] = "inf" if doc[key] > 0 else "-inf"
        return doc


def evaluate_scores(attack: str, scores, truth, seed: int = 0, folds: int = 5,
                    cv_seed: int | None = None) -> AttackReport:
    scores, truth = _validate(scores, truth)
    tau, acc = best_threshold_accuracy(scores, truth)
    return AttackReport(
        attack=attack,
        threshold=tau,
        accuracy=acc,
        map_train=mean_average_precision(scores, truth, "member"),
        map_test=mean_average_precision(scores, truth, "nonmember"),
        n=int(scores.size),
        seed=int(seed),
        cv_accuracy=cross_validated_accuracy(scores, truth, folds, seed if cv_seed is None else cv_seed),
    )
