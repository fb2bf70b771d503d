"""Command-line entry points: gen-synth, train-base, train-inc,
run-protocol, evaluate, report."""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .data import GaussianSpec, make_gaussian_dataset, read_fds, write_fds
from .errors import ConfigError
from .harness import (SessionReport, build_concat_classifier, evaluate,
                      load_class_split, run_protocol, split_protocol, write_report)
from .routing import write_trace
from .sessions import load_store, save_store, train_base, train_incremental


def _require(value, name):
    if value is None:
        raise ConfigError(f"missing required path/setting: {name}")
    return value


def _load_experiment(args):
    cfg = load_config(_require(args.config, "--config"))
    if args.seed is not None:
        cfg.protocol.seed = args.seed
    return cfg


def _load_datasets(cfg):
    train = read_fds(_require(cfg.paths.train_data, "paths.train_data"), "train")
    test = read_fds(_require(cfg.paths.test_data, "paths.test_data"), "test")
    return train, test


def _class_assignment(cfg):
    return load_class_split(cfg.paths.split) if cfg.paths.split else None


def cmd_gen_synth(args):
    spec = GaussianSpec(args.classes, args.dim, args.train_per_class,
                        args.test_per_class, args.spread, args.seed or 0)
    train, test = make_gaussian_dataset(spec)
    write_fds(args.out_train, train)
    write_fds(args.out_test, test)
    print(f"wrote {args.out_train} ({len(train)} samples) and "
          f"{args.out_test} ({len(test)} samples)")


def cmd_train_base(args):
    cfg = _load_experiment(args)
    train, test = _load_datasets(cfg)
    split = split_protocol(train, test, cfg.protocol, _class_assignment(cfg))
    store, log = train_base(split.sessions[0].train, cfg.train,
                            fc_enabled=cfg.flags.fc, ft_enabled=cfg.flags.ft,
                            seed=cfg.protocol.seed)
    save_store(store, _require(cfg.paths.store, "paths.store"))
    print(f"base session trained ({len(split.sessions[0].class_ids)} classes, "
          f"final loss {log.epoch_losses[-1]:.4f}); store -> {cfg.paths.store}")


def cmd_train_inc(args):
    cfg = _load_experiment(args)
    train, test = _load_datasets(cfg)
    split = split_protocol(train, test, cfg.protocol, _class_assignment(cfg))
    store = load_store(_require(cfg.paths.store, "paths.store"), cfg.train.activation)
    t = args.session if args.session is not None else len(store.sessions)
    if not 1 <= t <= cfg.protocol.sessions:
        raise ConfigError(f"session {t} out of range 1..{cfg.protocol.sessions}")
    train_incremental(store, split.sessions[t].train, cfg.train, cfg.protocol.seed,
                      epochs=cfg.train.epochs_inc if cfg.flags.dr else 0)
    save_store(store, cfg.paths.store)
    print(f"session {t} trained; store -> {cfg.paths.store}")


def cmd_run_protocol(args):
    cfg = _load_experiment(args)
    train, test = _load_datasets(cfg)
    trace = args.trace or cfg.paths.trace
    report, store = run_protocol(train, test, cfg.protocol, cfg.flags, cfg.train,
                                 _class_assignment(cfg), trace)
    if cfg.paths.store:
        save_store(store, cfg.paths.store)
    paths = write_report(report, _require(cfg.paths.report, "paths.report"))
    print(f"AA = {report.average_accuracy:.4f}; wrote {', '.join(paths)}")


def cmd_evaluate(args):
    cfg = _load_experiment(args)
    train, test = _load_datasets(cfg)
    store = load_store(_require(cfg.paths.store, "paths.store"), cfg.train.activation)
    seen = store.seen_class_ids()
    subset = test.restrict_to(seen)
    concat = None
    if not cfg.flags.ms:
        split = split_protocol(train, test, cfg.protocol, _class_assignment(cfg))
        concat = build_concat_classifier(store, split.sessions)
    result = evaluate(store, subset, cfg.flags, concat)
    trace = args.trace or cfg.paths.trace
    if trace and result.records:
        write_trace(trace, result.records, subset.labels)
    print(f"accuracy = {result.accuracy:.4f}, "
          f"routing accuracy = {result.routing_accuracy:.4f} "
          f"({len(subset)} samples, {len(seen)} classes)")


def cmd_report(args):
    with open(args.infile) as fh:
        report = SessionReport.from_json(fh.read())
    paths = write_report(report, args.out)
    print(f"wrote {', '.join(paths)}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fscil",
        description="Parameter-isolated few-shot class-incremental learning engine")
    sub = parser.add_subparsers(dest="command", required=True)

    seed_type = lambda v: int(v) & (2**64 - 1)  # noqa: E731

    p = sub.add_parser("gen-synth", help="generate a synthetic Gaussian benchmark")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--train-per-class", type=int, default=100)
    p.add_argument("--test-per-class", type=int, default=25)
    p.add_argument("--spread", type=float, default=0.3)
    p.add_argument("--seed", type=seed_type, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=cmd_gen_synth)

    for name, func in [("train-base", cmd_train_base), ("train-inc", cmd_train_inc),
                       ("run-protocol", cmd_run_protocol), ("evaluate", cmd_evaluate)]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=seed_type, default=None,
                       help="override the protocol seed")
        p.add_argument("--trace", default=None)
        if name == "train-inc":
            p.add_argument("--session", type=int, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="regenerate CSVs from a report JSON")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
