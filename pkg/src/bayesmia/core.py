"""Datasets, membership splits, seeded randomness and experiment configuration."""

from __future__ import annotations

import csv
import dataclasses
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, DataError

MODEL_KINDS = ("gaussian_mean", "logistic_regression")
ATTACKS = ("zero_one", "malt", "mast", "mast_closed_form", "optimal", "matt", "matt_full")
SPLIT_MODES = ("bernoulli", "exact")
GENERATORS = ("gaussian", "two_class")

_U64 = 2**64


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; streams are identical across platforms for a given seed."""
    return np.random.Generator(np.random.PCG64(_check_seed(seed)))


def derive_seed(seed: int, *keys: int | str) -> int:
    """Child seed for a named stage or index, independent of draw order elsewhere."""
    spawn_key = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys)
    ss = np.random.SeedSequence(entropy=_check_seed(seed), spawn_key=spawn_key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _check_seed(seed) -> int:
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {seed!r}") from None
    if not 0 <= seed < _U64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int = 0


@dataclass
class Dataset:
    """Feature matrix ``X`` of shape (n, d) with integer labels ``y``."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int = 1

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] == 0:
            raise DataError("dataset must be a nonempty 2-d feature array")
        if self.y.shape != (self.X.shape[0],):
            raise DataError("one label per sample required")
        if self.num_classes < 1:
            raise DataError("num_classes must be >= 1")
        if self.y.min() < 0 or self.y.max() >= self.num_classes:
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.X)):
            raise DataError("non-finite feature values")

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i) -> Sample:
        return Sample(self.X[i], int(self.y[i]))

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def samples(self) -> list[Sample]:
        return [self[i] for i in range(len(self))]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.num_classes)


@dataclass
class SplitSpec:
    mask: np.ndarray
    lam: float
    mode: str = "bernoulli"

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"lambda must lie in (0, 1), got {self.lam}")

    def __len__(self):
        return self.mask.shape[0]

    @property
    def n_members(self) -> int:
        return int(self.mask.sum())

    @property
    def members(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def draw_split(n: int, lam: float, seed: int, mode: str = "bernoulli") -> SplitSpec:
    """Membership mask over ``n`` samples.

    ``bernoulli`` draws every bit independently with P(member) = lam;
    ``exact`` marks exactly round(lam * n) samples, chosen uniformly.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ConfigError(f"n must be an integer >= 2, got {n!r}")
    if not 0.0 < lam < 1.0:
        raise ConfigError(f"lambda must lie in (0, 1), got {lam}")
    rng = make_rng(seed)
    if mode == "bernoulli":
        mask = rng.random(n) < lam
    elif mode == "exact":
        mask = np.zeros(n, dtype=bool)
        mask[rng.permutation(n)[: int(round(lam * n))]] = True
    else:
        raise ConfigError(f"unknown split mode {mode!r}")
    return SplitSpec(mask, float(lam), mode)


def gen_gaussian_dataset(n: int, d: int, mu, seed: int) -> Dataset:
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    if mu.shape != (d,):
        raise ConfigError(f"mu has length {mu.shape[0]}, expected d={d}")
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = make_rng(seed)
    X = mu + rng.standard_normal((n, d))
    return Dataset(X, np.zeros(n, dtype=np.int64), 1)


def gen_two_class_features(n: int, d: int, separation: float, seed: int) -> Dataset:
    """floor(n/2) samples of class 0 and the rest of class 1.

    Features are unit Gaussians centred at -/+ separation/2 along e1.
    """
    if n < 2:
        raise ConfigError(f"n must be at least 2, got {n}")
    if d < 1 or separation < 0:
        raise ConfigError("need d >= 1 and separation >= 0")
    rng = make_rng(seed)
    y = rng.permutation(np.repeat(np.arange(2, dtype=np.int64), [n // 2, n - n // 2]))
    X = rng.standard_normal((n, d))
    X[:, 0] += np.where(y == 1, 0.5, -0.5) * separation
    return Dataset(X, y, 2)


# --- dataset text format -------------------------------------------------------


def write_dataset(data: Dataset, path) -> None:
    d = data.dim
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(d)] + ["label"])
        for x, y in zip(data.X, data.y):
            w.writerow([format(v, ".17g") for v in x] + [int(y)])


def read_dataset(path, num_classes: int | None = None) -> Dataset:
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    d = len(header) - 1
    if d < 1 or header[-1] != "label" or header[:-1] != [f"f{j}" for j in range(d)]:
        raise DataError(f"{path}: header must be f0..f{{d-1}},label")
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no samples")
    try:
        X = np.array([[float(v) for v in r[:-1]] for r in body], dtype=np.float64)
        y = np.array([int(r[-1]) for r in body], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed row ({exc})") from exc
    if X.shape[1] != d:
        raise DataError(f"{path}: ragged rows")
    k = num_classes if num_classes is not None else int(y.max()) + 1
    return Dataset(X, y, max(k, 1))


# --- configuration -------------------------------------------------------------


@dataclass
class ExperimentConfig:
    model: str = "logistic_regression"
    generator: str = "two_class"
    data_path: str | None = None
    n: int = 400
    d: int = 16
    mu: Any = 0.0
    separation: float = 2.0
    lam: float = 0.5
    temperature: float = 1.0
    shadows: int = 0
    member_fraction: float = 0.5
    seed: int = 0
    attacks: list[str] = field(default_factory=lambda: ["malt"])
    out: str | None = None
    l2: float = 1.0
    tol: float = 1e-8
    split_mode: str = "exact"
    calibration_size: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.data_path is None and self.generator not in GENERATORS:
            raise ConfigError(f"generator must be one of {GENERATORS}, got {self.generator!r}")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"split_mode must be one of {SPLIT_MODES}")
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0")
        if self.shadows < 0:
            raise ConfigError("shadow count K must be >= 0")
        if not 0.0 < self.lam < 1.0:
            raise ConfigError("lambda must lie in (0, 1)")
        if not 0.0 < self.member_fraction < 1.0:
            raise ConfigError("member_fraction must lie in (0, 1)")
        if self.n < 2 or self.d < 1:
            raise ConfigError("need n >= 2 and d >= 1")
        if self.l2 < 0 or not self.tol > 0:
            raise ConfigError("need l2 >= 0 and tol > 0")
        _check_seed(self.seed)
        bad = [a for a in self.attacks if a not in ATTACKS]
        if bad or not self.attacks:
            raise ConfigError(f"unsupported attacks {bad}; choose from {ATTACKS}")
        if "mast" in self.attacks and self.shadows < 1:
            raise ConfigError("attack 'mast' needs a shadow ensemble: set shadows (K) >= 1")
        gaussian_only = {"mast_closed_form", "optimal"} & set(self.attacks)
        if gaussian_only and self.model != "gaussian_mean":
            raise ConfigError(f"attacks {sorted(gaussian_only)} require model gaussian_mean")
        if "optimal" in self.attacks and self.temperature != 1.0:
            raise ConfigError("the closed-form optimal attack is only defined at temperature 1")
        if "zero_one" in self.attacks and self.model == "gaussian_mean":
            raise ConfigError("attack 'zero_one' needs a classifier")
        if self.model == "logistic_regression" and self.l2 <= 0:
            raise ConfigError("logistic regression requires l2 > 0")
        if self.calibration_size is not None and self.calibration_size < 1:
            raise ConfigError("calibration_size must be >= 1")

    @property
    def needs_calibration(self) -> bool:
        return bool({"matt", "matt_full"} & set(self.attacks))

    def mu_vector(self) -> np.ndarray:
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        if mu.shape == (1,):
            return np.full(self.d, mu[0])
        if mu.shape != (self.d,):
            raise ConfigError(f"mu must be a scalar or a length-{self.d} list")
        return mu

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(doc)
