"""Command-line entry point: process, split, stats, eval and synth subcommands.

Exit codes: 0 success, 1 internal error, 2 leakage violation, 3 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import DEFAULT_CONFIG_YAML, ConfigError, load_config

EXIT_OK, EXIT_INTERNAL, EXIT_LEAKAGE, EXIT_CONFIG = 0, 1, 2, 3

logger = logging.getLogger("demcurate")


class _Parser(argparse.ArgumentParser):
    # argparse's default usage-error code (2) would read as a leakage violation
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML configuration file")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="demcurate", description="Curate ortho/DEM rasters into patch datasets.")
    parser.add_argument("--print-default-config", action="store_true",
                        help="print the complete default YAML configuration and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("process", help="repair, verticalise and tile sample directories")
    _common(p)
    p.add_argument("--input", type=Path, required=True, help="directory of sample directories")
    p.add_argument("--output", type=Path, required=True, help="dataset directory")

    p = sub.add_parser("split", help="cluster samples and assign train/val splits")
    _common(p)
    p.add_argument("--input", type=Path, required=True, help="dataset directory written by process")
    p.add_argument("--train-fraction", type=float, help="target share of training patches")
    p.add_argument("--verify-only", action="store_true", help="re-check an existing clusters.json")

    p = sub.add_parser("stats", help="write dataset statistics tables")
    _common(p)
    p.add_argument("--input", type=Path, required=True, help="dataset directory")
    p.add_argument("--output", type=Path, help="stats directory parent (default: the dataset directory)")

    p = sub.add_parser("eval", help="score predictions against dataset patches")
    _common(p)
    p.add_argument("--input", type=Path, required=True, help="prediction directory (pred.mgrd per patch)")
    p.add_argument("--dataset", type=Path, required=True, help="dataset directory")
    p.add_argument("--output", type=Path, required=True, help="directory for metrics.csv, cdf.csv, bins.csv")
    p.add_argument("--relative", action="store_true", help="predictions are standardised; rescale with gt statistics")
    p.add_argument("--exclude-masked", action="store_true", help="ignore invalid and outlier pixels")
    p.add_argument("--pooled", action="store_true", help="pixel-pooled aggregate instead of patch mean")

    p = sub.add_parser("synth", help="generate synthetic sample directories")
    _common(p)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--count", type=int, default=4)
    return parser


def cmd_process(args, cfg) -> int:
    from .pipeline import run_process
    summary = run_process(args.input, args.output, cfg, args.threads)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_split(args, cfg) -> int:
    from .pipeline import LeakageError, run_split, verify_split
    if args.verify_only:
        violations = verify_split(args.input)
    else:
        fraction = cfg.split.train_fraction if args.train_fraction is None else args.train_fraction
        if not 0 < fraction < 1:
            raise ConfigError("--train-fraction must lie in (0, 1)")
        try:
            clusters = run_split(args.input, fraction, cfg.seed)
        except LeakageError as exc:
            violations = exc.violations
        else:
            print(json.dumps({"clusters": len(clusters.clusters), **clusters.patch_totals()}, sort_keys=True))
            return EXIT_OK
    if violations:
        for a, b in violations:
            print(f"leakage: {a} {b}", file=sys.stderr)
        return EXIT_LEAKAGE
    print("ok")
    return EXIT_OK


def cmd_stats(args, cfg) -> int:
    from .pipeline import run_stats
    if args.output is not None and args.output != args.input:
        raise ConfigError("stats are written next to the manifest; --output must equal --input")
    summary = run_stats(args.input, cfg, args.threads)
    print(json.dumps({"patches": summary["patches"]}, sort_keys=True))
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    from .pipeline import run_eval
    summary = run_eval(args.dataset, args.input, args.output, cfg, relative=args.relative,
                       exclude_masked=args.exclude_masked, pooled=args.pooled)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _synth_one(job) -> str:
    from .ingest import save_sample
    from .grid import grid_write
    from .synth import synth_sample
    cfg, sample_id, out = job
    sample, truth = synth_sample(cfg, sample_id)
    directory = save_sample(sample, Path(out) / sample_id)
    grid_write(truth.nodata_truth, directory / "truth_nodata.mgrd")
    grid_write(truth.island_truth, directory / "truth_island.mgrd")
    return sample_id


def cmd_synth(args, cfg) -> int:
    from concurrent.futures import ProcessPoolExecutor
    from .rng import derive_seed
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    jobs = [(replace(cfg.synth, seed=derive_seed(cfg.seed, "synth", i)), f"synth_{i:04d}", str(args.output))
            for i in range(args.count)]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            list(pool.map(_synth_one, jobs))
    else:
        for job in jobs:
            _synth_one(job)
    print(json.dumps({"samples": args.count}))
    return EXIT_OK


COMMANDS = {"process": cmd_process, "split": cmd_split, "stats": cmd_stats, "eval": cmd_eval, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(DEFAULT_CONFIG_YAML)
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config).with_seed(args.seed)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level boundary maps failures to exit 1
        logger.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
