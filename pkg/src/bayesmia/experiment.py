"""Experiment pipeline: data, three-way split, training, shadows, scoring, evaluation.

The pool of ``N`` samples is split into a calibration part (used only to fit
the reference parameters of the Taylor attack) and ``n`` target samples. The
target samples carry the membership mask; members train the attacked model
and every target sample is scored.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from pathlib import Path

import numpy as np

from . import __version__, attacks, kernels
from .core import (
    Dataset,
    ExperimentConfig,
    SplitSpec,
    derive_seed,
    draw_split,
    gen_gaussian_dataset,
    gen_two_class_features,
    make_rng,
    read_dataset,
    write_dataset,
)
from .errors import BayesMIAError, ConfigError, DataError
from .evaluation import AttackReport, evaluate_scores, zero_one_accuracy, zero_one_accuracy_formula
from .models import (
    hessian_solver,
    load_params,
    logreg_predict,
    member_hessian,
    save_params,
    train_model,
)
from .shadow import (
    estimate_tau_global,
    estimate_tau_per_sample,
    load_ensemble,
    save_ensemble,
    train_shadows,
)

STAGES = ("data", "roles", "split", "shadows", "eval")
SUMMARY_FIELDS = ("attack", "seed", "accuracy", "threshold", "cv_accuracy", "map_train", "map_test", "n")


class Experiment:
    def __init__(self, config: ExperimentConfig, threads: int = 1):
        self.config = config
        self.threads = threads
        self.seeds = {stage: derive_seed(config.seed, stage) for stage in STAGES}
        self.data = None
        self.target_idx = self.calib_idx = None
        self.split = None
        self.target = self.theta0 = None
        self.ensemble = None
        self.scores: dict[str, np.ndarray] = {}
        self.reports: dict[str, AttackReport] = {}

    # --- stages ---------------------------------------------------------------

    @property
    def calibration_size(self) -> int:
        cfg = self.config
        if not cfg.needs_calibration:
            return 0
        return cfg.calibration_size or int(round(cfg.lam * cfg.n))

    def prepare_data(self) -> Dataset:
        cfg = self.config
        if cfg.data_path:
            self.data = read_dataset(cfg.data_path)
            if self.data.dim != cfg.d:
                raise DataError(f"dataset has d={self.data.dim}, config says d={cfg.d}")
            if len(self.data) != cfg.n + self.calibration_size:
                raise DataError(f"dataset has {len(self.data)} rows, expected n + calibration = "
                                f"{cfg.n + self.calibration_size}")
            return self.data
        N = cfg.n + self.calibration_size
        seed = self.seeds["data"]
        if cfg.generator == "gaussian":
            self.data = gen_gaussian_dataset(N, cfg.d, cfg.mu_vector(), seed)
        else:
            self.data = gen_two_class_features(N, cfg.d, cfg.separation, seed)
        return self.data

    def assign_roles(self) -> SplitSpec:
        cfg = self.config
        N = len(self.data)
        perm = make_rng(self.seeds["roles"]).permutation(N)
        c = self.calibration_size
        self.calib_idx = np.sort(perm[:c])
        self.target_idx = np.sort(perm[c:])
        self.split = draw_split(len(self.target_idx), cfg.lam, self.seeds["split"], cfg.split_mode)
        return self.split

    @property
    def targets(self) -> Dataset:
        return self.data.subset(self.target_idx)

    def train(self):
        cfg = self.config
        self.target = train_model(cfg.model, self.targets, self.split, cfg.l2, cfg.tol, cfg.temperature)
        if cfg.needs_calibration:
            calib = self.data.subset(self.calib_idx)
            full = SplitSpec(np.ones(len(calib), dtype=bool), 0.5, "exact")
            self.theta0 = train_model(cfg.model, calib, full, cfg.l2, cfg.tol, cfg.temperature)
        return self.target

    def train_shadows(self):
        cfg = self.config
        if cfg.shadows < 1:
            return None
        self.ensemble = train_shadows(self.targets, cfg.shadows, cfg.member_fraction, self.seeds["shadows"],
                                      cfg.model, cfg.l2, cfg.tol, "exact", self.threads)
        return self.ensemble

    def score(self) -> dict[str, np.ndarray]:
        cfg = self.config
        targets, theta = self.targets, self.target
        for name in cfg.attacks:
            if name == "zero_one":
                s = attacks.zero_one_scores(theta, targets)
            elif name == "malt":
                s = attacks.malt_scores(theta, targets)
            elif name == "mast":
                if self.ensemble is None:
                    raise ConfigError("attack 'mast' needs a shadow ensemble (K >= 1)")
                s = attacks.mast_scores(theta, targets, estimate_tau_per_sample(self.ensemble))
            elif name == "mast_closed_form":
                tau = attacks.TauEstimate(values=attacks.gaussian_tau_closed_form(
                    targets.X, cfg.mu_vector(), self.split.n_members))
                s = attacks.mast_scores(theta, targets, tau)
            elif name == "optimal":
                s = attacks.gaussian_optimal_scores(theta, targets, cfg.mu_vector(), self.split.n_members)
            elif name == "matt":
                s = attacks.matt_scores(theta, self.theta0, targets)
            elif name == "matt_full":
                calib = self.data.subset(self.calib_idx)
                H = member_hessian(self.theta0, calib, np.ones(len(calib), dtype=bool))
                s = attacks.matt_full_scores(theta, self.theta0, targets, hessian_solver(H))
            else:  # pragma: no cover - validated in the config
                raise ConfigError(f"unknown attack {name!r}")
            self.scores[name] = np.asarray(s, dtype=np.float64)
        return self.scores

    def evaluate(self) -> dict[str, AttackReport]:
        cfg = self.config
        truth = self.split.mask
        for name, s in self.scores.items():
            rep = evaluate_scores(name, s, truth, seed=cfg.seed, cv_seed=self.seeds["eval"])
            if name == "zero_one":
                # the 0-1 attack is a fixed rule, not a thresholded score
                p_train = float(s[truth].mean())
                p_test = float(s[~truth].mean())
                lam_hat = float(truth.mean())
                rep.threshold = 0.5
                rep.accuracy = zero_one_accuracy(s > 0.5, truth)
                rep.cv_accuracy = rep.accuracy
                rep.extra = {"p_train": p_train, "p_test": p_test, "lambda_hat": lam_hat,
                             "formula_accuracy": zero_one_accuracy_formula(lam_hat, p_train, p_test)}
            elif name == "malt" and self.ensemble is not None:
                tau = estimate_tau_global(self.ensemble)
                rep.extra = {"shadow_loss_threshold": tau.value,
                             "shadow_threshold_accuracy": float(np.mean((-s <= tau.value) == truth))}
            elif name == "mast":
                rep.extra = {"note": "per-sample thresholds estimated on the evaluated samples"}
            self.reports[name] = rep
        return self.reports

    def run(self) -> dict[str, AttackReport]:
        for stage, fn in (("data", self.prepare_data), ("split", self.assign_roles), ("train", self.train),
                          ("shadows", self.train_shadows), ("attack", self.score),
                          ("eval", self.evaluate)):
            try:
                fn()
            except BayesMIAError as exc:
                exc.stage = stage
                raise
        return self.reports

    def model_accuracy(self) -> tuple[float, float]:
        """Classifier accuracy on target members and held-out samples."""
        pred = logreg_predict(self.target, self.targets.X) == self.targets.y
        return float(pred[self.split.mask].mean()), float(pred[~self.split.mask].mean())

    # --- persistence ----------------------------------------------------------

    def save_data(self, out: Path):
        write_dataset(self.data, out / "dataset.csv")

    def load_data(self, out: Path):
        path = out / "dataset.csv"
        if not path.exists():
            raise DataError(f"{path} not found; run gen-data first")
        self.data = read_dataset(path, 2 if self.config.model == "logistic_regression" else None)

    def save_split(self, out: Path):
        _write_json(out / "split.json", {
            "lambda": self.split.lam,
            "mode": self.split.mode,
            "target_indices": self.target_idx.tolist(),
            "calibration_indices": self.calib_idx.tolist(),
            "mask": "".join("1" if b else "0" for b in self.split.mask),
        })

    def load_split(self, out: Path):
        doc = _read_json(out / "split.json", "split (run train first)")
        self.target_idx = np.array(doc["target_indices"], dtype=np.int64)
        self.calib_idx = np.array(doc["calibration_indices"], dtype=np.int64)
        self.split = SplitSpec(np.array([c == "1" for c in doc["mask"]]), doc["lambda"], doc["mode"])

    def save_models(self, out: Path):
        save_params(self.target, out / "target.json")
        if self.theta0 is not None:
            save_params(self.theta0, out / "theta0.json")

    def load_models(self, out: Path):
        if not (out / "target.json").exists():
            raise DataError("target.json not found; run train first")
        self.target = load_params(out / "target.json")
        if (out / "theta0.json").exists():
            self.theta0 = load_params(out / "theta0.json")

    def save_shadows(self, out: Path):
        if self.ensemble is not None:
            save_ensemble(self.ensemble, out / "shadows")

    def load_shadows(self, out: Path):
        if (out / "shadows" / "manifest.json").exists():
            self.ensemble = load_ensemble(out / "shadows", self.targets)

    def save_scores(self, out: Path) -> list[Path]:
        (out / "scores").mkdir(parents=True, exist_ok=True)
        paths = []
        for name, s in self.scores.items():
            path = out / "scores" / f"{name}.csv"
            write_scores(path, name, self.target_idx, s, self.split.mask)
            paths.append(path)
        return paths

    def load_scores(self, out: Path):
        for name in self.config.attacks:
            path = out / "scores" / f"{name}.csv"
            if not path.exists():
                raise DataError(f"{path} not found; run attack first")
            _, s, _ = read_scores(path)
            self.scores[name] = s

    def save_reports(self, out: Path) -> list[Path]:
        (out / "reports").mkdir(parents=True, exist_ok=True)
        paths = []
        for name, rep in self.reports.items():
            path = out / "reports" / f"{name}.json"
            _write_json(path, rep.to_dict())
            paths.append(path)
        write_summary(out / "summary.csv", self.reports.values())
        return paths


# --- file formats -------------------------------------------------------------------


def write_scores(path, attack: str, indices, scores, truth) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "attack", "score", "truth"])
        for i, s, t in zip(indices, scores, truth):
            w.writerow([int(i), attack, format(float(s), ".17g"), int(bool(t))])


def read_scores(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["index", "attack", "score", "truth"]:
        raise DataError(f"{path}: bad score table header")
    idx = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
    scores = np.array([float(r[2]) for r in rows[1:]], dtype=np.float64)
    truth = np.array([r[3] == "1" for r in rows[1:]], dtype=bool)
    return idx, scores, truth


def write_summary(path, reports, append: bool = False) -> None:
    new = not (append and Path(path).exists())
    with open(path, "a" if append else "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(SUMMARY_FIELDS)
        for rep in reports:
            doc = rep.to_dict()
            w.writerow([_fmt(doc[k]) for k in SUMMARY_FIELDS])


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_json(path, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {what}: {exc}") from exc


def utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, exp: Experiment, artifacts, started: str, status: str = "complete",
                   failed_stage: str | None = None) -> None:
    _write_json(path, {
        "config": exp.config.to_dict(),
        "seeds": {k: str(v) for k, v in exp.seeds.items()},
        "artifacts": sorted(str(a) for a in artifacts),
        "started": started,
        "finished": utc_now(),
        "status": status,
        "failed_stage": failed_stage,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "split_mode": exp.config.split_mode,
    })


def run_experiment(config: ExperimentConfig, threads: int = 1) -> Experiment:
    """Run every stage in memory and return the finished experiment."""
    exp = Experiment(config, threads)
    exp.run()
    return exp


def mean_and_stderr(values) -> tuple[float, float]:
    v = np.asarray(list(values), dtype=np.float64)
    if v.size < 2:
        return float(v.mean()), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
