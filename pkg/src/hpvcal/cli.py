"""Command-line interface.

Subcommands:
    synth      generate a synthetic observation set from a known truth
    calibrate  run adaptive-MCMC calibration against observations
    predict    posterior-predictive vaccination projection
    simulate   single deterministic forward run

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .datasets import DataError
from .runs import ConfigError, NumericsError, RunConfig, calibrate, \
    predict, simulate, synth_generate
from .solver import SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="JSON run config; flags override its fields")
    parser.add_argument("--seed", type=int, metavar="N",
                        help="root RNG seed")
    parser.add_argument("--out", metavar="DIR",
                        help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hpvcal",
        description="Two-strain HPV transmission model: calibration and "
                    "vaccination forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic observations")
    _add_common(p)

    p = sub.add_parser("calibrate", help="calibrate against observations")
    _add_common(p)
    p.add_argument("--iterations", type=int, metavar="N",
                   help="MCMC iterations per chain")
    p.add_argument("--variant", choices=("hpv6", "hpv11", "combined"),
                   help="strain variant selecting priors and bundled data")
    p.add_argument("--chains", type=int, metavar="N",
                   help="independent chains, run sequentially")
    p.add_argument("--data", metavar="PATH",
                   help="observations CSV (default: bundled variant data)")

    p = sub.add_parser("predict", help="posterior-predictive projection")
    _add_common(p)
    p.add_argument("--variant", choices=("hpv6", "hpv11", "combined"))
    p.add_argument("--calibration", metavar="DIR",
                   help="directory holding samples.csv from calibrate")

    p = sub.add_parser("simulate", help="single deterministic forward run")
    _add_common(p)
    p.add_argument("--variant", choices=("hpv6", "hpv11", "combined"))
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for name in ("seed", "out", "variant", "chains", "data", "calibration"):
        if hasattr(args, name) and getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    config = RunConfig.load(args.config, **overrides)
    if getattr(args, "iterations", None) is not None:
        config.sampler["iterations"] = args.iterations
        config.validate()
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    commands = {"synth": synth_generate, "calibrate": calibrate,
                "predict": predict, "simulate": simulate}
    try:
        config = _config_from_args(args)
        out_dir = commands[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericsError, SolverError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(out_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
