"""Command line entry point.

    airsketch run --config exp.cfg --out results.csv --seed 7 --trials 100 --threads 8
    airsketch compare-selection --config exp.cfg
    airsketch validate-fig3 --config exp.cfg
    airsketch cost-table --out cost.csv

Each run writes the row CSV, a ``*.summary.csv`` and a ``*.manifest.json``
next to it.
"""

import argparse
import logging
import os
import sys

from . import harness
from .config import ConfigError, load_config

log = logging.getLogger("airsketch")


def _parser():
    p = argparse.ArgumentParser(prog="airsketch", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "Monte Carlo run of the configured mode"),
                        ("compare-selection", "paired runs with and without sketch selection"),
                        ("validate-fig3", "pinned-beamformer bound validation"),
                        ("cost-table", "closed-form device cost table")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=name != "cost-table")
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--threads", type=int, default=1)
    return p


def _load(args, **extra):
    cfg = load_config(args.config, root_seed=args.seed, trials=args.trials, **extra)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    return cfg


def _outputs(args, cfg):
    path = args.out or cfg.output
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    return path, harness.sidecar(path, ".summary.csv"), harness.sidecar(path, ".manifest.json")


def _run(args, cfg):
    path, summary_path, manifest_path = _outputs(args, cfg)
    if args.command == "compare-selection":
        res, paired = harness.compare_selection(cfg, threads=args.threads)
        harness.write_table(paired, harness.PAIRED_COLUMNS, summary_path)
        for row in paired:
            log.info("t=%d  without=%.6g  with=%.6g  diff=%.3g  p=%.3g", row["slot"],
                     row["mean_without"], row["mean_with"], row["mean_diff"], row["p_value"])
    else:
        res = harness.run_experiment(cfg, threads=args.threads)
        harness.write_table(res.summary(), harness.SUMMARY_COLUMNS, summary_path)
    harness.emit_csv(res.rows, path)
    harness.write_manifest(res, manifest_path, [path, summary_path])
    log.info("wrote %d rows to %s", len(res.rows), path)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "cost-table":
            data = harness.write_table(harness.cost_table(), harness.COST_COLUMNS, args.out)
            if args.out is None:
                sys.stdout.write(data.decode())
            return 0
        extra = {"mode": "fig3-validation"} if args.command == "validate-fig3" else {}
        cfg = _load(args, **extra)
        if args.command == "compare-selection" and cfg.mode != "flycom+selection":
            cfg = cfg.replace(mode="flycom+selection")
        _run(args, cfg)
    except (ConfigError, OSError) as exc:
        print(f"airsketch: error: {exc}", file=sys.stderr)
        return 2
    return 0
