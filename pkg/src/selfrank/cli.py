"""Command-line driver: ``selfrank {gen,train,eval,active}``.

Every command stages its outputs in a hidden sibling directory and moves the
files into ``--out`` only after the command has succeeded. The effective
configuration is written next to the outputs as ``config.txt``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import shutil
import sys
import tempfile

import numpy as np

from .active import PoolExhausted, active_loop, write_cycles
from .config import ConfigError, ExperimentConfig
from .dataset import load_dataset, save_dataset
from .experiments import GroupBank, NumericFailure, build_data, derive_seed, make_network, train
from .io import atomic_write_text, read_csv, write_csv
from .metrics import all_metrics
from .network import ShapeError
from .ranking import LossAudit
from .tensor import load_checkpoint, save_checkpoint

log = logging.getLogger("selfrank")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
METRIC_COLUMNS = ("split", "n", "MAE", "MSE", "LCC", "SROCC")


class DataError(RuntimeError):
    pass


@contextlib.contextmanager
def staged(out):
    """Yield a scratch directory whose files replace those in ``out`` on success."""
    out = os.path.abspath(out)
    parent = os.path.dirname(out)
    os.makedirs(parent, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=f".{os.path.basename(out)}.", dir=parent)
    try:
        yield stage
        for dirpath, _, files in os.walk(stage):
            rel = os.path.relpath(dirpath, stage)
            dest = os.path.normpath(os.path.join(out, rel))
            os.makedirs(dest, exist_ok=True)
            for f in files:
                os.replace(os.path.join(dirpath, f), os.path.join(dest, f))
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def load_config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "arm": getattr(args, "arm", None)}
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"{args.config}: config file not found")
        return ExperimentConfig.load(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def get_data(cfg, net, data_dir):
    if data_dir:
        try:
            return load_dataset(data_dir, cfg.task, cfg, net)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"{data_dir}: {exc}") from exc
    return build_data(cfg, net)


def metric_row(split, y, yhat):
    m = all_metrics(y, yhat)
    return (split, len(y), m["MAE"], m["MSE"], m["LCC"], m["SROCC"])


def cmd_gen(args):
    cfg = load_config(args)
    net = make_network(cfg)
    data = build_data(cfg, net)
    with staged(args.out) as stage:
        counts = save_dataset(data, stage)
        atomic_write_text(os.path.join(stage, "config.txt"), cfg.to_text())
    print(f"groups={counts['groups']} pairs={counts['pairs']} "
          f"train={len(data.train_y)} pool={len(data.pool_y)} test={len(data.test_y)}")


def cmd_train(args):
    cfg = load_config(args)
    if cfg.arm == "active":
        raise ConfigError("use the 'active' command for the active arm")
    net = make_network(cfg)
    data = get_data(cfg, net, args.data)
    bank = GroupBank(data.groups) if cfg.arm == "multitask" else None
    if cfg.arm == "multitask" and not data.groups:
        raise DataError("multitask arm needs ranked groups")
    with staged(args.out) as stage:
        audit = LossAudit(os.path.join(stage, "loss.csv"))
        try:
            train(net, data.train_x, data.train_t, cfg, cfg.steps, bank,
                  seed=derive_seed(cfg.seed, "train"), audit=audit)
        finally:
            if audit.rows:
                audit.write()
        save_checkpoint(net.params, os.path.join(stage, "model.rpk"))
        rows = [metric_row("train", data.train_y, net.predict(data.train_x)),
                metric_row("test", data.test_y, net.predict(data.test_x))]
        write_csv(os.path.join(stage, "metrics.csv"), METRIC_COLUMNS, rows)
        atomic_write_text(os.path.join(stage, "config.txt"), cfg.to_text())
    for r in rows:
        print(" ".join(f"{c}={v}" for c, v in zip(METRIC_COLUMNS, r)))


def cmd_eval(args):
    cfg = load_config(args)
    net = make_network(cfg)
    data = get_data(cfg, net, args.data)
    x, y = {"train": (data.train_x, data.train_y), "test": (data.test_x, data.test_y),
            "pool": (data.pool_x, data.pool_y)}[args.split]
    if args.predictions:
        try:
            rows = read_csv(args.predictions)
            pred = np.array([float(r["prediction"]) for r in sorted(rows, key=lambda r: int(r["index"]))])
        except (OSError, KeyError, ValueError) as exc:
            raise DataError(f"{args.predictions}: {exc}") from exc
        if pred.shape != y.shape:
            raise DataError(f"{args.predictions}: {pred.size} predictions for {y.size} images")
    else:
        if not args.checkpoint:
            raise ConfigError("eval needs --checkpoint or --predictions")
        try:
            state = load_checkpoint(args.checkpoint)
        except (OSError, ValueError) as exc:
            raise DataError(f"{args.checkpoint}: {exc}") from exc
        try:
            net.params.load_state(state)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"checkpoint does not fit the configured network: {exc}") from exc
        pred = net.predict(x)
    row = metric_row(args.split, y, pred)
    with staged(args.out) as stage:
        write_csv(os.path.join(stage, "metrics.csv"), METRIC_COLUMNS, [row])
        atomic_write_text(os.path.join(stage, "config.txt"), cfg.to_text())
    print(" ".join(f"{c}={v}" for c, v in zip(METRIC_COLUMNS, row)))


def cmd_active(args):
    cfg = load_config(args)
    net = make_network(cfg)
    data = get_data(cfg, net, args.data)
    policies = ("certainty", "random") if args.policy == "both" else (args.policy,)
    rows = []
    for policy in policies:
        rows += active_loop(cfg, data, policy, log=lambda r: log.info("%s", r))
    with staged(args.out) as stage:
        write_cycles(os.path.join(stage, "cycles.csv"), rows)
        atomic_write_text(os.path.join(stage, "config.txt"), cfg.to_text())
    for r in rows:
        print(f"{r['policy']} cycle={r['cycle']} labeled={r['labeled_fraction']:.2f} MAE={r['MAE']:.4f}")


def build_parser():
    p = argparse.ArgumentParser(prog="selfrank", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, arm=True):
        sp.add_argument("--config", metavar="PATH", help="key = value configuration file")
        sp.add_argument("--seed", type=int, metavar="U64", help="override the configured seed")
        sp.add_argument("--out", metavar="DIR", required=True, help="output directory")
        if arm:
            sp.add_argument("--arm", metavar="NAME", choices=("baseline", "multitask", "active"))

    g = sub.add_parser("gen", help="generate a dataset with ranked groups")
    common(g)
    t = sub.add_parser("train", help="train one arm and write a checkpoint")
    common(t)
    t.add_argument("--data", metavar="DIR", help="dataset written by 'gen' (default: generate in memory)")
    e = sub.add_parser("eval", help="evaluate a checkpoint or a predictions file")
    common(e)
    e.add_argument("--data", metavar="DIR")
    e.add_argument("--checkpoint", metavar="PATH")
    e.add_argument("--predictions", metavar="PATH", help="CSV with index, prediction columns")
    e.add_argument("--split", choices=("test", "train", "pool"), default="test")
    a = sub.add_parser("active", help="run the labeling loop for both selection policies")
    common(a)
    a.add_argument("--data", metavar="DIR")
    a.add_argument("--policy", choices=("both", "certainty", "random"), default="both")
    return p


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "active": cmd_active}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, PoolExhausted, ShapeError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
