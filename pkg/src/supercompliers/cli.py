"""``sck`` command-line interface.

Exit codes: 0 success, 1 assumption rejected under ``--strict``, 2 config
error, 3 data validation error, 4 estimation error, 5 internal error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .data import DataConfig, load_observations, read_bytes_hash
from .dgp import load_dgp
from .exceptions import ConfigError, DataValidationError, EstimationError
from .report import (
    OUTPUT_DIR_ENV,
    AnalysisOptions,
    build_estimate_report,
    build_quantile_report,
    build_simulation_report,
    build_test_report,
    load_analysis_config,
    render_text,
)

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ESTIMATION = 4
EXIT_INTERNAL = 5

DEFAULT_OUTPUT_DIR = "sck_output"


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _probability(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < p < 1.0:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sck", description="Supercomplier shares, characteristics and tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="YAML config: column mapping and analysis options")
        p.add_argument("--out", help=f"output directory (default: ${OUTPUT_DIR_ENV} or ./{DEFAULT_OUTPUT_DIR})")
        p.add_argument("--quiet", action="store_true", help="do not print the text report")

    p = sub.add_parser("estimate", help="shares and characteristics of compliers and supercompliers")
    p.add_argument("--data", required=True)
    common(p, config_required=True)
    p.add_argument("--strata", help="stratum column; adds fixed-effects estimates")
    p.add_argument("--covariates", type=_csv_list, help="comma-separated covariates (default: from config)")
    p.add_argument("--confidence", type=_probability, help="confidence level (default 0.95)")
    p.add_argument("--ar", action="store_true", help="add Anderson-Rubin sets for supercomplier means")

    p = sub.add_parser("test", help="sharp joint test and outcome-monotonicity tests")
    p.add_argument("--data", required=True)
    common(p)
    p.add_argument("--cells", help="column defining cells for the conditional OM test")
    p.add_argument("--draws", type=int, help="simulation draws (default 100000)")
    p.add_argument("--seed", type=int, help="simulation seed (default 0)")
    p.add_argument("--level", type=_probability, help="test level (default 0.05)")
    p.add_argument("--strict", action="store_true", help="exit with status 1 when a test rejects")

    p = sub.add_parser("simulate", help="compare estimators with the analytic truth of a DGP")
    p.add_argument("--dgp", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--reps", type=int, default=1)
    common(p)

    p = sub.add_parser("quantiles", help="supercomplier CDF and quantiles of a covariate")
    p.add_argument("--data", required=True)
    common(p)
    p.add_argument("--covariate", required=True)
    p.add_argument("--theta", type=_float_list, required=True, help="comma-separated quantile levels")
    p.add_argument("--conditioning", choices=("x", "yx"), default="x")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--grid", type=_float_list, help="CDF evaluation points (default: sample quantiles)")
    return parser


def _load_config(path: str | None) -> tuple[DataConfig, AnalysisOptions]:
    if path is None:
        return DataConfig(), AnalysisOptions()
    return load_analysis_config(path)


def _read_column(path: str, column: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise DataValidationError(f"missing column(s): {column}")
        return np.array([row[column] for row in reader])


def _output_dir(arg: str | None) -> str:
    return arg or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR


def _override(options: AnalysisOptions, **kw) -> AnalysisOptions:
    vals = options.to_dict()
    vals.update({k: v for k, v in kw.items() if v is not None})
    return AnalysisOptions.from_mapping(vals)


def _check_files(args) -> None:
    for attr in ("data", "config", "dgp"):
        path = getattr(args, attr, None)
        if path is not None and not os.path.isfile(path):
            raise ConfigError(f"--{attr}: file not found: {path}")


def _run(args) -> int:
    _check_files(args)
    if args.command == "simulate":
        if args.n < 1:
            raise ConfigError("--n must be at least 1")
        _, options = _load_config(args.config)
        dgp = load_dgp(args.dgp)
        report = build_simulation_report(dgp, args.n, args.seed, args.reps, options, read_bytes_hash(args.dgp))
        return _emit(report, args)

    config, options = _load_config(args.config)
    if args.command == "estimate":
        if args.strata:
            config = DataConfig(**{**config.to_dict(), "stratum": args.strata})
        if args.covariates:
            extra = tuple(c for c in args.covariates if c not in config.covariates)
            config = DataConfig(**{**config.to_dict(), "covariates": config.covariates + extra})
        options = _override(options, level=args.confidence, ar_intervals=True if args.ar else None)
        table = load_observations(args.data, config)
        report = build_estimate_report(table, config, options, read_bytes_hash(args.data),
                                       covariates=args.covariates, stratified=config.stratum is not None)
        return _emit(report, args)

    if args.command == "test":
        if args.draws is not None and args.draws < 1000:
            raise ConfigError(f"insufficient simulation draws: {args.draws} < 1000")
        options = _override(options, draws=args.draws, seed=args.seed, test_level=args.level)
        table = load_observations(args.data, config)
        cells = _read_column(args.data, args.cells) if args.cells else None
        if cells is not None and cells.shape[0] != table.n:
            raise DataValidationError("cell column length does not match the data")
        report = build_test_report(table, options, read_bytes_hash(args.data), cells, args.cells)
        code = _emit(report, args)
        rejected = any(t.get("reject") for t in report.tests.values())
        return EXIT_REJECTED if (args.strict and rejected) else code

    if args.command == "quantiles":
        if args.covariate not in config.covariates:
            config = DataConfig(**{**config.to_dict(), "covariates": config.covariates + (args.covariate,)})
        table = load_observations(args.data, config)
        report = build_quantile_report(table, args.covariate, args.theta, options, read_bytes_hash(args.data),
                                       args.conditioning, args.bins, args.grid)
        return _emit(report, args)
    raise ConfigError(f"unknown command {args.command!r}")


def _emit(report, args) -> int:
    report.write(_output_dir(args.out))
    if not args.quiet:
        sys.stdout.write(render_text(report))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"sck: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataValidationError as exc:
        print(f"sck: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as exc:
        print(f"sck: estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except Exception as exc:  # noqa: BLE001
        print(f"sck: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
