"""Command line entry point: ``fedcert {train,certify,run,synth}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment, report
from .config import ExperimentConfig, dump_config, load_config
from .data import gen_synthetic, to_uint8, write_idx


def _load(args) -> tuple:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    out = Path(args.out) if args.out else cfg.resolve(cfg.output.dir)
    return cfg, out


def cmd_train(args) -> int:
    cfg, out = _load(args)
    outcome = experiment.train(cfg)
    experiment.save_training(outcome, out)
    (out / "config.txt").write_text(dump_config(cfg))
    print(f"saved {len(outcome.clients)} checkpoints under {out / 'params'}")
    return 0


def cmd_certify(args) -> int:
    cfg, out = _load(args)
    train_set, test_set = experiment.load_datasets(cfg)
    net = experiment.build_network(cfg, train_set)
    params = experiment.load_checkpoints(cfg, out)
    table, rows = experiment.certify_clients(cfg, net, params, test_set)
    experiment.write_reports(cfg, table, rows, out)
    _summary(table)
    return 0


def cmd_run(args) -> int:
    cfg, out = _load(args)
    table = experiment.run_experiment(cfg, out_dir=out)
    (out / "config.txt").write_text(dump_config(cfg))
    _summary(table)
    return 0


def cmd_synth(args) -> int:
    cfg, out = _load(args)
    d = cfg.data
    out.mkdir(parents=True, exist_ok=True)
    for split, n, tag in (("train", d.synthetic_n, 0), ("test", d.synthetic_test_n, 1)):
        ds = gen_synthetic(n, d.synthetic_side, d.synthetic_classes, [d.synthetic_seed, tag],
                           d.synthetic_noise, split)
        write_idx(out / f"{split}-images-idx3-ubyte", to_uint8(ds.images[..., 0]))
        write_idx(out / f"{split}-labels-idx1-ubyte", ds.labels)
    print(f"wrote synthetic IDX files to {out}")
    return 0


def _summary(table) -> None:
    acrs = table.aggregate_acr()
    print(f"certified accuracy at radius 0: mean {table.mean[0]:.3f} "
          f"(min {table.min[0]:.3f}, max {table.max[0]:.3f}); mean ACR {acrs['mean']:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedcert", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_text in (
        ("train", cmd_train, "run the training scheme and save client checkpoints"),
        ("certify", cmd_certify, "certify saved checkpoints and write curve tables"),
        ("run", cmd_run, "train and certify"),
        ("synth", cmd_synth, "write the synthetic dataset as IDX files"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value experiment file")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", help="output directory (default: output.dir from the config)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, experiment.ExperimentError) as exc:
        print(f"fedcert: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
