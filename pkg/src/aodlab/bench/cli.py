"""``aodlab <experiment> --config <path> [--seed N] [--out DIR] [--plot] [--no-timing] [--print-defaults]``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure
(diverged training, missing or unreadable model file).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import DEFAULTS, KINDS, ConfigError, format_config, load_config
from . import experiments

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

_RUNNERS = {
    "mae_vs_power": experiments.run_mae_vs_power,
    "mae_vs_slots": experiments.run_mae_vs_slots,
    "runtime": experiments.run_runtime_table,
    "scrlb_curve": experiments.run_scrlb_curve,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aodlab", description="Downlink AoD estimation experiments.")
    p.add_argument("experiment", choices=KINDS)
    p.add_argument("--config", help="experiment config file ([experiment] section, key = value)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--plot", action="store_true", help="also write an SVG chart next to the CSV")
    p.add_argument("--no-timing", action="store_true", help="leave the runtime column empty")
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    if args.print_defaults:
        sys.stdout.write(format_config(DEFAULTS[args.experiment]))
        return EXIT_OK
    try:
        cfg = load_config(args.config, args.experiment) if args.config else DEFAULTS[args.experiment]
        updates = {}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.out is not None:
            updates["out_dir"] = args.out
        cfg = replace(cfg, **updates)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if cfg.kind == "train":
            outcome = experiments.run_train(cfg)
            print(f"model: {outcome.model_path}")
            print(f"curve: {outcome.curve_path}")
            print(f"test MAE {outcome.test_mae_deg:.4f} deg (untrained {outcome.untrained_mae_deg:.4f} deg)")
            return EXIT_OK
        result = _RUNNERS[cfg.kind](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    path = experiments.write_csv(result, Path(cfg.out_dir) / f"{cfg.kind}.csv", timing=not args.no_timing)
    print(f"csv: {path}")
    if args.plot:
        print(f"svg: {_plot(path)}")
    return EXIT_OK


def _plot(path):
    from .plotting import plot_csv

    return plot_csv(path)


if __name__ == "__main__":
    sys.exit(main())
