"""Command-line entry point: ``bayesmia <subcommand> --config cfg.json --out DIR``.

Stages share one output directory::

    dataset.csv            gen-data
    split.json, target.json, theta0.json       train
    shadows/               shadow
    scores/<attack>.csv    attack
    reports/<attack>.json, summary.csv         eval
    manifest.json          run

Exit codes: 0 success, 2 config, 3 data, 4 training, 5 calibration,
6 evaluation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .core import ExperimentConfig, load_config
from .errors import BayesMIAError, ConfigError, DataError
from .evaluation import dp_membership_bound, membership_privacy_bound
from .experiment import Experiment, mean_and_stderr, utc_now, write_manifest, write_summary


def _resolve_config(args) -> ExperimentConfig:
    if getattr(args, "manifest", None):
        try:
            with open(args.manifest, encoding="utf-8") as fh:
                doc = json.load(fh)["config"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") from exc
        cfg = ExperimentConfig.from_dict(doc)
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise ConfigError("--config PATH is required")
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out=args.out)
    if not cfg.out:
        raise ConfigError("no output directory: pass --out DIR or set 'out' in the config")
    return cfg


def _experiment(args) -> tuple[Experiment, Path]:
    cfg = _resolve_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return Experiment(cfg, threads=args.threads), out


def cmd_gen_data(args) -> int:
    exp, out = _experiment(args)
    path = out / "dataset.csv"
    if path.exists() and not args.force:
        raise DataError(f"{path} exists; pass --force to overwrite")
    exp.prepare_data()
    exp.save_data(out)
    print(f"wrote {path} ({len(exp.data)} rows, d={exp.data.dim})")
    return 0


def cmd_train(args) -> int:
    exp, out = _experiment(args)
    exp.load_data(out)
    exp.assign_roles()
    exp.train()
    exp.save_split(out)
    exp.save_models(out)
    print(f"trained target on {exp.split.n_members} members of {len(exp.split)} target samples")
    return 0


def cmd_shadow(args) -> int:
    exp, out = _experiment(args)
    exp.load_data(out)
    exp.load_split(out)
    if exp.config.shadows < 1:
        raise ConfigError("shadows (K) must be >= 1 to train an ensemble")
    exp.train_shadows()
    exp.save_shadows(out)
    print(f"trained {exp.ensemble.K} shadow models")
    return 0


def cmd_attack(args) -> int:
    exp, out = _experiment(args)
    exp.load_data(out)
    exp.load_split(out)
    exp.load_models(out)
    exp.load_shadows(out)
    if exp.config.needs_calibration and exp.theta0 is None:
        raise DataError("theta0.json missing; re-run train with a Taylor attack configured")
    exp.score()
    for path in exp.save_scores(out):
        print(f"wrote {path}")
    return 0


def cmd_eval(args) -> int:
    exp, out = _experiment(args)
    exp.load_data(out)
    exp.load_split(out)
    exp.load_shadows(out)
    exp.load_scores(out)
    exp.evaluate()
    exp.save_reports(out)
    _print_reports(exp)
    return 0


def _run_one(cfg: ExperimentConfig, out: Path, threads: int, force: bool) -> Experiment:
    manifest = out / "manifest.json"
    if manifest.exists() and not force:
        raise DataError(f"{manifest} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    exp = Experiment(cfg, threads=threads)
    started = utc_now()
    artifacts: list[Path] = []
    try:
        exp.run()
        exp.save_data(out)
        exp.save_split(out)
        exp.save_models(out)
        exp.save_shadows(out)
        artifacts += [out / "dataset.csv", out / "split.json", out / "target.json"]
        if exp.theta0 is not None:
            artifacts.append(out / "theta0.json")
        if exp.ensemble is not None:
            artifacts.append(out / "shadows")
        artifacts += exp.save_scores(out)
        artifacts += exp.save_reports(out)
        artifacts.append(out / "summary.csv")
    except BayesMIAError as exc:
        write_manifest(manifest, exp, artifacts, started, "incomplete", getattr(exc, "stage", None))
        raise
    write_manifest(manifest, exp, artifacts, started)
    return exp


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out)
    if args.repeat <= 1:
        exp = _run_one(cfg, out, args.threads, args.force)
        _print_reports(exp)
        return 0
    reports = []
    for r in range(args.repeat):
        sub = dataclasses.replace(cfg, seed=cfg.seed + r, out=str(out / f"seed_{cfg.seed + r}"))
        exp = _run_one(sub, Path(sub.out), args.threads, args.force)
        reports += list(exp.reports.values())
    write_summary(out / "summary.csv", reports)
    _print_aggregate(reports)
    return 0


def cmd_dp_bound(args) -> int:
    print(f"epsilon-DP bound: {dp_membership_bound(args.epsilon, args.lam):.6g}")
    if args.delta is not None or args.temperature is not None:
        delta = 0.0 if args.delta is None else args.delta
        T = 1.0 if args.temperature is None else args.temperature
        print(f"(epsilon, delta)-membership-privacy bound: "
              f"{membership_privacy_bound(args.epsilon, delta, T, args.lam):.6g}")
    return 0


def _print_reports(exp: Experiment) -> None:
    print(f"{'attack':<18}{'accuracy':>10}{'cv_acc':>10}{'mAP_train':>11}{'mAP_test':>10}")
    for rep in exp.reports.values():
        print(f"{rep.attack:<18}{rep.accuracy:>10.4f}{rep.cv_accuracy:>10.4f}"
              f"{rep.map_train:>11.4f}{rep.map_test:>10.4f}")


def _print_aggregate(reports) -> None:
    names = list(dict.fromkeys(r.attack for r in reports))
    print(f"{'attack':<18}{'accuracy':>18}{'mAP_train':>18}{'mAP_test':>18}")
    for name in names:
        rs = [r for r in reports if r.attack == name]
        cols = []
        for key in ("accuracy", "map_train", "map_test"):
            m, se = mean_and_stderr(getattr(r, key) for r in rs)
            cols.append(f"{m:.4f} ± {se:.4f}")
        print(f"{name:<18}" + "".join(f"{c:>18}" for c in cols))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesmia", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def stage(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("--threads", type=int, default=1, help="worker threads for shadow training")
        p.set_defaults(func=fn)
        return p

    stage("gen-data", cmd_gen_data, "generate the dataset file")
    stage("train", cmd_train, "split the data and train the target (and reference) model")
    stage("shadow", cmd_shadow, "train the shadow ensemble on the target samples")
    stage("attack", cmd_attack, "score every target sample with each configured attack")
    stage("eval", cmd_eval, "compute accuracy and mAP reports from score files")
    run = stage("run", cmd_run, "run all stages and write a manifest")
    run.add_argument("--manifest", help="replay the configuration stored in a run manifest")
    run.add_argument("--repeat", type=int, default=1, help="run consecutive seeds into seed_<s>/ subdirectories")

    dp = sub.add_parser("dp-bound", help="membership-probability bounds under privacy guarantees")
    dp.add_argument("--epsilon", type=float, required=True)
    dp.add_argument("--delta", type=float)
    dp.add_argument("--temperature", "-T", type=float)
    dp.add_argument("--lambda", dest="lam", type=float, default=0.5)
    dp.set_defaults(func=cmd_dp_bound)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BayesMIAError as exc:
        stage = getattr(exc, "stage", None) or args.command
        print(f"bayesmia {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
