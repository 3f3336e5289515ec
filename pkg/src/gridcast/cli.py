"""Command-line entry point.

    gridcast <verb> [--config FILE] [--set section.key=value ...]

Verbs: generate, train, calibrate, predict, evaluate, e2e. The environment
variable GRIDCAST_OUTDIR overrides paths.out_dir (explicit --set overrides
win over it). Success prints a single JSON line to stdout; failures print a
single JSON error line to stderr and exit 1 (usage/data errors) or 2
(internal errors).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import load_config
from .data import CsvFormatError
from .pipeline import VERBS, run_command
from .training import TrainingDiverged

OUTDIR_ENV = "GRIDCAST_OUTDIR"

_USER_ERRORS = (ValueError, FileNotFoundError, NotADirectoryError,
                PermissionError, KeyError, TypeError, CsvFormatError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridcast",
        description="Interval forecasts for metered energy readings: "
                    "synthetic data, training, conformal calibration, "
                    "streaming prediction, and evaluation.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", default=None,
                       help="YAML configuration file (defaults apply without it)")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a config entry, e.g. train.epochs=5")
    return parser


def _error_line(exc: Exception) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    env_out = os.environ.get(OUTDIR_ENV)
    if env_out:
        # JSON-quote so an exotic path cannot change the YAML parse
        overrides.insert(0, f"paths.out_dir={json.dumps(env_out)}")
    try:
        config = load_config(args.config, overrides)
        result = run_command(args.verb, config)
    except TrainingDiverged as exc:
        print(_error_line(exc), file=sys.stderr)
        return 2
    except _USER_ERRORS as exc:
        print(_error_line(exc), file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - anything else is internal
        print(_error_line(exc), file=sys.stderr)
        return 2
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
