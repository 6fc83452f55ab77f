"""Command-line driver: train -> attack -> evaluate, plus the synthetic
case-study reproducer.

Stage outputs are files (checkpoint, scores CSV, report CSV) so each
command can be re-run from persisted artifacts. Diagnostics go to
stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import nn
from .config import (ConfigError, ExperimentConfig, parse_config,
                     write_report_csv)
from .pipeline import (build_detectors, load_dataset, run_case_study,
                       run_evaluation, train_model)


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
    if args.preset:
        cfg.attack_preset_name = args.preset
    if args.out:
        cfg.output_dir = args.out
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg


def _checkpoint_path(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.output_dir, "model.ckpt")


def cmd_train(args) -> int:
    cfg = _load_config(args)
    train, test, _shape = load_dataset(cfg)
    model = train_model(cfg, train)
    nn.save_checkpoint(model, _checkpoint_path(cfg))
    print(f"checkpoint={_checkpoint_path(cfg)} "
          f"train_accuracy={nn.accuracy(model, train):.4f} "
          f"test_accuracy={nn.accuracy(model, test):.4f}")
    return 0


def _model_for(cfg: ExperimentConfig, train) -> nn.ModelParams:
    path = _checkpoint_path(cfg)
    if os.path.exists(path):
        return nn.load_checkpoint(path)
    model = train_model(cfg, train)
    nn.save_checkpoint(model, path)
    return model


def cmd_attack(args) -> int:
    from .attacks import run_attack, with_seed

    cfg = _load_config(args)
    train, test, shape = load_dataset(cfg)
    model = _model_for(cfg, train)
    specs = cfg.resolved_attacks()
    out_path = os.path.join(cfg.output_dir, "attacks.npz")
    arrays, meta = {}, []
    for ai, spec in enumerate(specs):
        advs, fooled = [], []
        for si, (x, y) in enumerate(zip(test.inputs, test.labels)):
            o = run_attack(model, x, int(y),
                           with_seed(spec, cfg.seed * 1_000_003 + si * 1009 + ai),
                           clip=cfg.clip_domain, image_shape=shape)
            advs.append(o.x_adv)
            fooled.append(o.fooled)
        arrays[f"adv_{ai}"] = np.asarray(advs)
        arrays[f"fooled_{ai}"] = np.asarray(fooled)
        meta.append(spec.label())
        print(f"{spec.label()}: fooled {int(np.sum(fooled))}/{len(test)}",
              file=sys.stderr)
    np.savez_compressed(out_path, specs=np.array(meta), **arrays)
    print(f"attacks={out_path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    train, test, shape = load_dataset(cfg)
    model = _model_for(cfg, train)
    detectors = build_detectors(cfg, model, train, image_shape=shape)
    rows = run_evaluation(cfg, model, detectors, test, image_shape=shape,
                          eval_limit=args.limit,
                          warn=lambda m: print(f"warning: {m}", file=sys.stderr))
    report_path = os.path.join(cfg.output_dir, "report.csv")
    write_report_csv(rows, report_path)
    _print_summary(rows)
    print(f"report={report_path}")
    return 0


def _print_summary(rows: list[dict]) -> None:
    header = f"{'norm':>5} {'eps':>8} {'setting':>8} {'detector':>8} " \
             f"{'auroc':>7} {'fpr95':>7} {'#adv':>5}"
    print(header)
    for r in rows:
        print(f"{r['norm']:>5} {str(r['epsilon']):>8} {r['setting']:>8} "
              f"{r['detector']:>8} {r['auroc']:7.3f} {r['fpr_at_95_tpr']:7.3f} "
              f"{r['n_adversarials']:>5}")


def cmd_case_study(args) -> int:
    result = run_case_study() if args.seed is None else run_case_study(args.seed)
    ca = result["corrupted_accuracy"]
    m = result["detector_matrix"]
    b = result["both_trained"]
    print(f"classifier accuracy: train={result['train_accuracy']:.3f} "
          f"test={result['test_accuracy']:.3f}")
    print(f"corrupted accuracy: ace={ca['ace']:.3f} gini={ca['gini']:.3f}")
    print("detector accuracy (rows = trained on, cols = tested on):")
    print(f"{'':>8} {'ace':>7} {'gini':>7}")
    for trained in ("ace", "gini"):
        print(f"{trained:>8} {m[trained]['ace']:7.3f} {m[trained]['gini']:7.3f}")
    print(f"{'both':>8} {b['ace']:7.3f} {b['gini']:7.3f}")
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args)
    path = os.path.join(cfg.output_dir, "report.csv")
    with open(path, "r", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        r["auroc"] = float(r["auroc"])
        r["fpr_at_95_tpr"] = float(r["fpr_at_95_tpr"])
    _print_summary(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mead",
        description="Multi-armed adversarial-example detector evaluation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("train", cmd_train), ("attack", cmd_attack),
                     ("evaluate", cmd_evaluate), ("case-study", cmd_case_study),
                     ("report", cmd_report)):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--preset", type=str, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--limit", type=int, default=None,
                       help="cap on evaluated test samples")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, nn.ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
