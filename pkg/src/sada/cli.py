"""``sada`` command line.

Exit codes: 0 success, 1 configuration or usage error, 2 data error
(including unreadable or incomplete run directories).
"""
from __future__ import annotations

import argparse
import csv
import os
import statistics
import sys

from sada import config as cfgmod
from sada import outputs
from sada.config import Policy
from sada.errors import ConfigError, DataError

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message, EXIT_CONFIG)


def load_config(path, overrides):
    text = ""
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    overrides = list(overrides)
    env_seed = os.environ.get("SADA_SEED")
    if env_seed:
        overrides.append(f"run.seed={env_seed}")
    return cfgmod.parse_config(text, overrides)


def _apply_threads(cfg, threads):
    if threads is None:
        return cfg
    return cfg.with_overrides(run={"threads": threads})


def run_one(cfg, run_dir):
    from sada.trainer import run_training

    writer = outputs.RunWriter(run_dir, cfg)
    try:
        result = run_training(cfg, sink=writer)
    finally:
        writer.close()
    writer.finish(result.model)
    with open(os.path.join(run_dir, outputs.CONFIG_FILE), "w") as fh:
        fh.write(cfgmod.serialize_config(cfg))
    return result


def cmd_train(args):
    cfg = _apply_threads(load_config(args.config, args.overrides), args.threads)
    result = run_one(cfg, args.out)
    last = result.reports[-1]
    print(f"trained {cfg.run.epochs} epochs ({cfg.run.policy.value}); final test accuracy {last.test_acc:.4f}")
    return EXIT_OK


def _parse_policies(text):
    try:
        pols = [Policy(p.strip().lower()) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"--policies: {exc}") from None
    if len(pols) < 2:
        raise ConfigError("--policies needs at least two policies")
    return pols


def cmd_compare(args):
    from sada.trainer import run_training

    base = _apply_threads(load_config(args.config, args.overrides), args.threads)
    policies = _parse_policies(args.policies)
    if args.repeats < 1:
        raise ConfigError("--repeats must be >= 1")
    os.makedirs(args.out, exist_ok=True)
    rows, aggregates = [], []
    for pol in policies:
        accs, trk = [], []
        for r in range(args.repeats):
            seed = base.run.seed + r
            cfg = base.with_overrides(run={"policy": pol, "seed": seed, "dump_state": False,
                                           "trace": False})
            result = run_training(cfg)
            acc = result.reports[-1].test_acc
            tms = statistics.fmean(rep.tracker_ms for rep in result.reports)
            rows.append((pol.value, seed, acc, tms, None))
            accs.append(acc)
            trk.append(tms)
            print(f"{pol.value} seed={seed}: test accuracy {acc:.4f}", flush=True)
        std = statistics.stdev(accs) if len(accs) > 1 else None
        aggregates.append((pol.value, "mean", statistics.fmean(accs), statistics.fmean(trk), std))
    outputs.write_csv(os.path.join(args.out, outputs.COMPARE_FILE), outputs.COMPARE_HEADER,
                      rows + aggregates)
    return EXIT_OK


def _read_csv(path, what):
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError:
        raise DataError(f"{path}: {what} not found") from None


def cmd_inspect(args):
    state_path = os.path.join(args.run_dir, outputs.STATE_FILE)
    if not os.path.exists(state_path):
        raise DataError(f"{args.run_dir}: no {outputs.STATE_FILE}; rerun train with run.dump_state = true")
    sid = str(args.sample)
    state = [r for r in _read_csv(state_path, "state dump") if r["sample_id"] == sid]
    if not state:
        raise DataError(f"sample {args.sample} not found in {state_path}")
    trace_path = os.path.join(args.run_dir, outputs.TRACE_FILE)
    applied = {}
    if os.path.exists(trace_path):
        for r in _read_csv(trace_path, "trace"):
            if r["sample_id"] == sid:
                applied[r["epoch"]] = (r["strength"], r["op"])
    scheduled = {str(int(r["epoch"]) + 1): r["strength"] for r in state}
    rows = []
    for r in state:
        if r["delta"] == "":
            continue
        strength, op = applied.get(r["epoch"], (scheduled.get(r["epoch"], ""), ""))
        rows.append((r["epoch"], r["delta"], r["window_variance"], r["ema"], strength, op))
    out = os.path.join(args.run_dir, f"sample{args.sample}.csv")
    outputs.write_csv(out, outputs.INSPECT_HEADER, rows)
    print(out)
    return EXIT_OK


def cmd_export_histogram(args):
    import numpy as np

    state_path = os.path.join(args.run_dir, outputs.STATE_FILE)
    if not os.path.exists(state_path):
        raise DataError(f"{args.run_dir}: no {outputs.STATE_FILE}; rerun train with run.dump_state = true")
    ep = str(args.epoch)
    emas = [float(r["ema"]) for r in _read_csv(state_path, "state dump") if r["epoch"] == ep]
    if not emas:
        raise DataError(f"epoch {args.epoch} not present in {state_path}")
    out = outputs.histogram_path(args.run_dir, args.epoch)
    outputs.write_histogram(out, np.array(emas), args.bins)
    print(out)
    return EXIT_OK


def build_parser():
    keys = "config keys (section.key = default):\n" + cfgmod.describe_keys()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="sada", description="Sample-aware dynamic augmentation experiments.",
                     epilog=keys, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_args(p):
        p.add_argument("-c", "--config", help="config file (key = value lines with [sections])")
        p.add_argument("--threads", type=int, help="augmentation worker threads")
        p.add_argument("overrides", nargs="*", metavar="key=value", help="config overrides")

    p = sub.add_parser("train", help="run one training job", epilog=keys, formatter_class=fmt)
    run_args(p)
    p.add_argument("-o", "--out", default="sada-run", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="run several policies over repeated seeds",
                       epilog=keys, formatter_class=fmt)
    run_args(p)
    p.add_argument("--policies", required=True, help="comma-separated: noaug,fixed_random,sada")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("-o", "--out", default="sada-compare", help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("inspect", help="per-sample trajectory from a run's state dump")
    p.add_argument("run_dir")
    p.add_argument("--sample", type=int, required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("export-histogram", help="difficulty histogram for one epoch")
    p.add_argument("run_dir")
    p.add_argument("--epoch", type=int, required=True)
    p.add_argument("--bins", type=int, default=16)
    p.set_defaults(func=cmd_export_histogram)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"sada: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"sada: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"sada: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
