"""Command-line entry point: ``randeeponet {generate,train,ablate,report}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 some sweep
runs failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench
from .config import load_config
from .errors import ConfigError
from .report import make_report

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randeeponet", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="experiment config file")
    common.add_argument("--out-dir", type=Path, help="override [experiment] out_dir")
    common.add_argument("--jobs", type=int, default=1, help="parallel runs for ablate")
    common.add_argument("--seed-override", type=int, help="replace every seed in the config")
    common.add_argument("--resume", action="store_true", help="ablate: keep finished rows")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="generate the dataset file")
    sub.add_parser("train", parents=[common], help="train one configuration")
    sub.add_parser("ablate", parents=[common], help="run the [sweep] cross-product")
    rep = sub.add_parser("report", parents=[common], help="summary CSV and SVG charts")
    rep.add_argument("--results", type=Path, help="results CSV (default <out_dir>/results.csv)")
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.out_dir is not None:
        default_ds = cfg.dataset == cfg.out_dir / "dataset.nods"
        cfg.out_dir = args.out_dir
        if default_ds:
            cfg.dataset = args.out_dir / "dataset.nods"
    if args.seed_override is not None:
        cfg = cfg.with_seed(args.seed_override)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        if args.command == "generate":
            path = bench.generate(cfg)
            print(f"wrote {path}")
        elif args.command == "train":
            row = bench.cmd_train(cfg)
            print(f"test_mse={row['test_mse']:.6e} mean_r2={row['mean_r2']:.6f} "
                  f"train_seconds={row['train_seconds']:.2f}")
        elif args.command == "ablate":
            rows, failed = bench.cmd_ablate(cfg, jobs=args.jobs, resume=args.resume)
            print(f"{len(rows)} rows in {cfg.out_dir / 'results.csv'}, {failed} failed")
            if failed:
                return EXIT_PARTIAL
        elif args.command == "report":
            results = args.results or cfg.out_dir / "results.csv"
            if not results.exists():
                raise ConfigError(f"results file {results} not found")
            notes = {"results": results.name}
            if args.seed_override is not None:
                notes["seed_override"] = args.seed_override
            for p in make_report(results, cfg.out_dir / "report", notes=notes):
                print(f"wrote {p}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
