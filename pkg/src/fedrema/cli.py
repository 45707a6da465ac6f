"""Command-line interface.

Subcommands:
  run               run one experiment from a config file
  partition-report  print per-client class histograms for a config
  compare           run several strategies on the identical partition
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from fedrema import runner
from fedrema.config import ExperimentConfig, apply_overrides, load_config
from fedrema.errors import FedremaError


def _base_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    return load_config(path)


def _add_common_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="path to an INI config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--strategy", default=None,
                   choices=["local", "fedavg", "fedper", "fedrema"])
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--out", dest="out_dir", default=None,
                   help="output directory (default: $FEDREMA_OUT_DIR or ./runs)")


def cmd_run(args) -> int:
    config = apply_overrides(
        _base_config(args.config),
        seed=args.seed, strategy=args.strategy, rounds=args.rounds,
        out_dir=args.out_dir)
    out_dir = os.path.join(config.out_dir, f"{config.strategy}_seed{config.seed}")
    result = runner.run_experiment(config, out_dir=out_dir)
    print(json.dumps(result.summary, indent=2))
    print(f"metrics written to {out_dir}", file=sys.stderr)
    return 0


def cmd_partition_report(args) -> int:
    config = _base_config(args.config)
    datasets = runner.build_datasets(config)
    header = "client group " + " ".join(f"c{c}" for c in range(config.num_classes))
    print(header)
    for k, ds in enumerate(datasets):
        full = np.bincount(
            np.concatenate([ds.train.labels, ds.test.labels]),
            minlength=config.num_classes)
        counts = " ".join(f"{int(n):4d}" for n in full)
        print(f"{k:6d} {k % config.num_groups:5d} {counts}")
    return 0


def cmd_compare(args) -> int:
    base = _base_config(args.config)
    strategies = [s.strip() for s in args.configs.split(",")]
    rows = []
    for strat in strategies:
        config = dataclasses.replace(base, strategy=strat).validate()
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
        if args.rounds is not None:
            config = dataclasses.replace(config, rounds=args.rounds)
        result = runner.run_experiment(config)
        rows.append((strat, result.summary))
    print(f"{'strategy':<10} {'best':>8} {'last5':>8} {'ccp_rounds':>10}")
    for strat, s in rows:
        print(f"{strat:<10} {s['best_mean_accuracy']:>8.4f} "
              f"{s['last5_mean_accuracy']:>8.4f} {s['ccp_rounds']:>10d}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fedrema")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_common_overrides(p_run)
    p_run.set_defaults(func=cmd_run)

    p_part = sub.add_parser("partition-report",
                            help="print per-client class histograms")
    p_part.add_argument("--config", default=None)
    p_part.set_defaults(func=cmd_partition_report)

    p_cmp = sub.add_parser("compare",
                           help="run several strategies on the same partition")
    p_cmp.add_argument("--config", default=None)
    p_cmp.add_argument("--configs", required=True,
                       help="comma-separated strategies, e.g. local,fedavg,fedrema")
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--rounds", type=int, default=None)
    p_cmp.set_defaults(func=cmd_compare)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FedremaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
