"""Command line front end: train / attack / calibrate / analyze / experiment."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness
from .attacks import AttackConfig, QueryOracle, whitebox_attack, zoo_attack, ql_attack
from .analysis import empirical_gradient_error
from .data import load_dataset
from .defense import CalibrationMode, NoiseModel, calibrate_variance
from .losses import AttackGoal
from .models import Classifier, evaluate_accuracy, train_classifier
from .plotting import render_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="outrand",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a classifier and write a checkpoint")
    p_train.add_argument("--dataset", default="blobs")
    p_train.add_argument("--arch", default="64", help="hidden layer sizes, comma separated")
    p_train.add_argument("--epochs", type=int, default=30)
    p_train.add_argument("--lr", type=float, default=0.5)
    p_train.add_argument("--batch-size", type=int, default=32)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="checkpoint path")

    p_attack = sub.add_parser("attack", help="run one attack on one image")
    p_attack.add_argument("--dataset", default="blobs")
    p_attack.add_argument("--model", required=True)
    p_attack.add_argument("--attack", choices=harness.ATTACKS, default="zoo")
    p_attack.add_argument("--goal", choices=("targeted", "untargeted"), default="untargeted")
    p_attack.add_argument("--target", type=int, default=None, help="target class for targeted goals")
    p_attack.add_argument("--index", type=int, default=0, help="dataset row to attack")
    p_attack.add_argument("--sigma2", type=float, default=0.0)
    p_attack.add_argument("--avg-samples", type=int, default=1)
    p_attack.add_argument("--iters", type=int, default=None)
    p_attack.add_argument("--seed", type=int, default=0)

    p_cal = sub.add_parser("calibrate", help="variance for a target flip rate")
    p_cal.add_argument("--k", type=float, required=True)
    p_cal.add_argument("--delta", type=float, required=True)
    p_cal.add_argument("--mode", choices=("paper", "corrected"), default="corrected")

    p_an = sub.add_parser("analyze", help="FD gradient error report at one probe")
    p_an.add_argument("--dataset", default="blobs")
    p_an.add_argument("--model", required=True)
    p_an.add_argument("--index", type=int, default=0)
    p_an.add_argument("--coord", type=int, default=0)
    p_an.add_argument("--sigma2", type=float, required=True)
    p_an.add_argument("--h", type=float, default=1e-4)
    p_an.add_argument("--samples", type=int, default=100_000)
    p_an.add_argument("--seed", type=int, default=0)

    p_exp = sub.add_parser("experiment", help="run a seeded experiment grid to CSV")
    p_exp.add_argument("--spec", default=None, help="key=value config file")
    p_exp.add_argument("--kind", choices=harness.KINDS, default=None)
    p_exp.add_argument("--dataset", default=None)
    p_exp.add_argument("--model", default=None)
    p_exp.add_argument("--attack", choices=harness.ATTACKS, default=None)
    p_exp.add_argument("--goal", choices=("targeted", "untargeted"), default=None)
    p_exp.add_argument("--sigma2", action="append", default=None, type=float)
    p_exp.add_argument("--avg-samples", action="append", default=None, type=int,
                       dest="avg_samples")
    p_exp.add_argument("--images", type=int, default=None)
    p_exp.add_argument("--repeats", type=int, default=None)
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--out", default=None, help=f"CSV path (default ${harness.OUT_DIR_ENV}/<id>.csv)")
    p_exp.add_argument("--mode", choices=("paper", "corrected"), default=None)
    p_exp.add_argument("--id", default=None, help="experiment id for rows and file stem")
    p_exp.add_argument("--no-figures", action="store_true",
                       help="skip rendering the PNG next to the CSV")
    return parser


def _cmd_train(args) -> int:
    data = load_dataset(args.dataset)
    hidden = tuple(int(v) for v in args.arch.split(",") if v)
    model = train_classifier(data, hidden=hidden, epochs=args.epochs,
                             learning_rate=args.lr, seed=args.seed,
                             batch_size=args.batch_size)
    model.save(args.out)
    accuracy = evaluate_accuracy(model, data)
    print(f"checkpoint={args.out}")
    print(f"train_accuracy={accuracy:.4f}")
    return 0


def _cmd_attack(args) -> int:
    data = load_dataset(args.dataset)
    model = Classifier.load(args.model)
    x0 = data.pixels[args.index]
    label = int(data.labels[args.index])
    if args.goal == "targeted":
        target = args.target
        if target is None or target == label:
            raise ValueError("targeted attack needs --target different from the true label")
        goal = AttackGoal.targeted(target)
    else:
        goal = AttackGoal.untargeted(label)
    cfg = AttackConfig(avg_samples=args.avg_samples)
    if args.iters is not None:
        cfg.max_iters = args.iters
    noise = NoiseModel.isotropic(args.sigma2, model.num_classes) if args.sigma2 > 0 else None
    if args.attack == "whitebox":
        result = whitebox_attack(model, noise, x0, goal, cfg, seed=args.seed)
    else:
        oracle = QueryOracle(model, noise, rng=np.random.default_rng(args.seed + 1))
        attack_fn = zoo_attack if args.attack == "zoo" else ql_attack
        result = attack_fn(oracle, x0, goal, cfg, seed=args.seed)
    print(f"success={str(result.success).lower()}")
    print(f"final_label={result.final_label}")
    print(f"l2_distortion={result.l2_distortion:.6g}")
    print(f"linf_distortion={result.linf_distortion:.6g}")
    print(f"queries={result.queries}")
    print(f"iterations_run={result.iterations_run}")
    return 0


def _cmd_calibrate(args) -> int:
    mode = CalibrationMode(args.mode)
    print(f"{calibrate_variance(args.k, args.delta, mode):.6f}")
    return 0


def _cmd_analyze(args) -> int:
    data = load_dataset(args.dataset)
    model = Classifier.load(args.model)
    noise = NoiseModel.isotropic(args.sigma2, model.num_classes)
    report = empirical_gradient_error(model, noise, data.pixels[args.index],
                                      args.coord, args.h, args.samples, seed=args.seed)
    print(f"g_clean={report.g_clean:.6g}")
    print(f"gamma_mean={report.gamma_mean:.6g}")
    print(f"gamma_std={report.gamma_std:.6g}")
    print(f"empirical_error={report.empirical_error:.6g}")
    print(f"mean_abs_error={report.mean_abs_error:.6g}")
    print(f"taylor_error={report.taylor_error:.6g}")
    print(f"samples={report.samples}")
    print(f"rejection_rate={report.rejection_rate:.6g}")
    return 0


def _cmd_experiment(args) -> int:
    values = harness.parse_spec_file(args.spec) if args.spec else {}
    overrides = {
        "kind": args.kind, "dataset": args.dataset, "model": args.model,
        "attack": args.attack, "goal": args.goal, "images": args.images,
        "repeats": args.repeats, "seed": args.seed, "out": args.out,
        "mode": args.mode, "id": args.id,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = str(value)
    if args.sigma2 is not None:
        values["sigma2"] = ",".join(repr(v) for v in args.sigma2)
    if args.avg_samples is not None:
        values["avg_samples"] = ",".join(str(v) for v in args.avg_samples)
    spec = harness.spec_from_mapping(values)
    out_path = spec.out or harness.default_out_path(spec)
    spec.out = out_path
    rows = harness.run_experiment(spec)
    print(f"rows={len(rows)}")
    print(f"csv={out_path}")
    if not args.no_figures:
        print(f"figure={render_experiment(spec.kind, rows, out_path)}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "attack": _cmd_attack,
    "calibrate": _cmd_calibrate,
    "analyze": _cmd_analyze,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
