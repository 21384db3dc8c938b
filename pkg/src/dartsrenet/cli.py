"""Command-line entry point.

Commands: search, train, eval, export-dot, selftest.  All commands accept
``--config FILE`` (line-oriented ``key = value``) plus per-key override
flags; every run writes its fully resolved config under ``--out``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import search as search_mod
from . import selftest
from .cells import Genotype
from .config import ConfigError, RunConfig, freeze_config, parse_config_file, resolve_config
from .data import Dataset, DataError, load_cifar10, load_raw, synthetic_corpus
from .network import build_network, count_parameters
from .search import evaluate_normalized, retrain, run_search
from .data import NormStats, compute_norm_stats


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in fields(RunConfig):
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name,
                            default=argparse.SUPPRESS, metavar="V")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dartsrenet",
        description="Search, train, and evaluate ReNet classifiers with searched RNN cells.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (("search", "derive a cell design via alternating optimization"),
                      ("train", "train a discrete-cell or baseline model"),
                      ("eval", "evaluate a checkpoint on a dataset split")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", help="key = value config file")
        _add_config_flags(p)
    p = sub.add_parser("export-dot", help="render a genotype file as DOT")
    p.add_argument("genotype", help="genotype text file")
    p.add_argument("--dot-out", help="output path (default: alongside input)")
    p = sub.add_parser("selftest", help="run gradient and oracle checks")
    p.add_argument("--quiet", action="store_true")
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else None
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if hasattr(args, f.name)}
    return resolve_config(file_values, overrides)


def _load_datasets(config: RunConfig) -> tuple[Dataset, Dataset]:
    if config.dataset == "cifar10":
        root = config.data_root()
        if not root:
            raise ConfigError("set data=<dir> or $DARTSRENET_DATA for dataset=cifar10")
        train, test = load_cifar10(root)
    elif config.dataset == "drim":
        if not config.drim_train or not config.drim_test:
            raise ConfigError("dataset=drim needs drim_train and drim_test paths")
        train = load_raw(config.drim_train)
        test = load_raw(config.drim_test)
    else:
        train = synthetic_corpus(config.synthetic_train, config.seed, "train")
        test = synthetic_corpus(config.synthetic_eval, config.seed + 1, "test")
    rng = np.random.default_rng(config.seed)
    if config.limit_train and config.limit_train < len(train):
        train = train.subset(np.sort(rng.permutation(len(train))[:config.limit_train]))
    if config.limit_eval and config.limit_eval < len(test):
        test = test.subset(np.sort(rng.permutation(len(test))[:config.limit_eval]))
    return train, test


def cmd_search(config: RunConfig) -> int:
    out = Path(config.out)
    freeze_config(config, out)
    ag.set_finite_checks(config.finite_checks)
    train, _ = _load_datasets(config)
    genotype, report = run_search(config.network_config("mixed"),
                                  config.train_settings(), train)
    genotype.save(out / "genotype.txt")
    search_mod.write_search_report(report, out / "search_report.csv")
    best = report.epochs[report.best_epoch]
    print(f"search: {len(report.epochs)} epochs, best val loss "
          f"{best.val_loss:.4f} at epoch {best.epoch}")
    print(f"genotype -> {out / 'genotype.txt'}")
    return 0


def cmd_train(config: RunConfig) -> int:
    out = Path(config.out)
    freeze_config(config, out)
    ag.set_finite_checks(config.finite_checks)
    if config.cell == "mixed":
        raise ConfigError("train needs a discrete cell source (preset/file/gru/lstm)")
    train, test = _load_datasets(config)
    model, report = retrain(None, config.network_config(), config.train_settings(),
                            train, test)
    model.save(out / "model.drnt")
    report.norm_stats.save(out / "norm_stats.txt")
    search_mod.write_retrain_report(report, out / "retrain_report.csv")
    search_mod.write_metrics(report, out / "metrics.txt")
    counts = count_parameters(model)
    print(f"train: {len(report.epochs)} epochs, best val acc "
          f"{max(r.val_acc for r in report.epochs):.4f} at epoch {report.best_epoch}")
    if report.test_accuracy is not None:
        print(f"test accuracy {report.test_accuracy:.4f}")
    print(f"parameters {counts.total:,} ({counts.total_millions:.2f} M)")
    print(f"checkpoint -> {out / 'model.drnt'}")
    return 0


def cmd_eval(config: RunConfig) -> int:
    if not config.checkpoint:
        raise ConfigError("eval needs checkpoint=<path>")
    out = Path(config.out)
    freeze_config(config, out)
    ag.set_finite_checks(config.finite_checks)
    train, test = _load_datasets(config)
    model = build_network(config.network_config(), seed=config.seed)
    model.load(config.checkpoint)
    stats_path = config.norm_stats or str(Path(config.checkpoint).parent / "norm_stats.txt")
    if Path(stats_path).exists():
        stats = NormStats.load(stats_path)
    else:
        stats = compute_norm_stats(train.images)
    split = test if config.eval_split == "test" else train
    acc = evaluate_normalized(model, split.images, split.labels, stats)
    (out / "eval.txt").write_text(
        f"split {config.eval_split}\nitems {len(split)}\naccuracy {acc:.4f}\n")
    print(f"eval: {config.eval_split} accuracy {acc:.4f} over {len(split)} items")
    return 0


def cmd_export_dot(genotype_path: str, dot_out: str | None) -> int:
    genotype = Genotype.load(genotype_path)
    dest = Path(dot_out) if dot_out else Path(genotype_path).with_suffix(".dot")
    dest.write_text(genotype.to_dot())
    print(f"dot -> {dest}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return 0 if selftest.run_all(verbose=not args.quiet) else 1
        if args.command == "export-dot":
            return cmd_export_dot(args.genotype, args.dot_out)
        config = _resolve(args)
        if args.command == "search":
            return cmd_search(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "eval":
            return cmd_eval(config)
    except (ConfigError, DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
