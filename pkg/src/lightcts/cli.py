"""``lightcts {synth,train,eval,profile,study}``.

Exit status: 0 on success, 1 when the configuration or inputs fail
validation, 2 on any other runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import workbench as wb
from .config import RunConfig, load_config
from .errors import ConfigError, InsufficientLengthError, ShapeError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ConfigError, ShapeError, InsufficientLengthError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lightcts", description="Lightweight correlated time series forecasting workbench")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("synth", "generate a synthetic dataset (data.cts1)"),
        ("train", "train a model; writes checkpoint.lcts and history.jsonl"),
        ("eval", "score a checkpoint on the test split; writes metrics.csv"),
        ("profile", "parameter and FLOP report per component"),
        ("study", "train one model per sweep value; writes study.csv"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key=value run configuration file")
        p.add_argument("--seed", type=int, help="model/training seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--format", choices=("csv", "table"), default="table", help="stdout format")
    return parser


def _config(args) -> RunConfig:
    over = {"seed": args.seed, "out": args.out}
    if args.config:
        return load_config(args.config, **over)
    return RunConfig(**{k: v for k, v in over.items() if v is not None})


def _emit(rows_or_report, fmt: str) -> None:
    if isinstance(rows_or_report, list):
        text = wb.rows_to_csv(rows_or_report) if fmt == "csv" else wb.rows_to_table(rows_or_report)
    else:
        text = rows_or_report.to_csv() if fmt == "csv" else rows_or_report.to_table()
    sys.stdout.write(text)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        if cfg.data is None:
            cfg.validate()  # file-backed configs are checked once the data is read
        if args.command == "synth":
            print(wb.cmd_synth(cfg))
        elif args.command == "train":
            res = wb.cmd_train(cfg)
            print(f"best epoch {res.best_epoch}, val MAE {res.best_val_mae:.6f} (normalized); checkpoint {cfg.checkpoint_path}")
        elif args.command == "eval":
            _emit(wb.cmd_eval(cfg), args.format)
        elif args.command == "profile":
            _emit(wb.cmd_profile(cfg, args.format), args.format)
        elif args.command == "study":
            _emit(wb.cmd_study(cfg), args.format)
    except VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - reported, mapped to the runtime exit code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())
