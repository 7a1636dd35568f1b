#!/usr/bin/env python3
# simulate.py
"""
Command line for the bandit lab.

Usage:
    python simulate.py [run] --algo kl --family uniform-matroid --d 8 --m 3 --n 5000 \
        --alpha 0,0.25,0.5,1 --trials 20 --seed 42 --out results.csv
    python simulate.py compare --d 8 --m 3 --n 4096 --alpha 0.5 --trials 20
    python simulate.py inspect-family --family restricted --d0 3

Exit codes: 0 success, 2 configuration error, 3 runtime/solver error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional, Sequence

from config import DEFAULT_SEED, DEFAULT_WORKERS, LOG_LEVEL, MEAN_RANGE, OUTPUT_DIR, VERSION
from services.harness import (
    ALGOS,
    FAMILY_KINDS,
    FORMATS,
    SCHEDULES,
    ExperimentConfig,
    FamilySpec,
    MeanSpec,
    build_family,
    compare_feedback,
    final_summary,
    inspect_family,
    run_experiment,
    validate_family_spec,
    write_partial_manifest,
    write_results,
    write_summary,
)
from services.instance import NOISE_LAWS
from utils.errors import CombBanditError, ConfigError, TrialError
from utils.text import parse_float_list, shorten

log = logging.getLogger("simulate")

SUBCOMMANDS = ("run", "compare", "inspect-family")
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _add_family_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=FAMILY_KINDS, default="uniform-matroid")
    p.add_argument("--d", type=int, help="number of base arms (uniform-matroid)")
    p.add_argument("--m", type=int, help="super-arm size (uniform-matroid, matching)")
    p.add_argument("--d0", type=int, help="restricted family parameter, d = 2*d0")
    p.add_argument("--family-file", help="JSON family/instance, arms 1-indexed")


def _add_experiment_args(p: argparse.ArgumentParser, with_algo: bool) -> None:
    _add_family_args(p)
    if with_algo:
        p.add_argument("--algo", choices=ALGOS, required=True)
    p.add_argument("--n", type=int, required=True, help="horizon")
    p.add_argument("--alpha", default="0.5", help="comma separated alpha grid")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workers", type=int, default=DEFAULT_WORKERS)
    p.add_argument("--mean-lo", type=float, default=MEAN_RANGE[0])
    p.add_argument("--mean-hi", type=float, default=MEAN_RANGE[1])
    p.add_argument("--mu", help="explicit comma separated mean vector (overrides lo/hi)")
    p.add_argument("--noise", choices=NOISE_LAWS, default="bernoulli")
    p.add_argument("--fixed-instance", action="store_true", help="share one instance")
    p.add_argument("--checkpoints", choices=SCHEDULES, default="pow2")
    p.add_argument("--strict", action="store_true", help="alpha outside range is an error")
    p.add_argument("--trace-dir", help="write per-round JSONL traces here")
    p.add_argument("--out", help="result file (csv or json)")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--summary", help="write the aggregated summary as CSV here")
    p.add_argument("--verbose", "-v", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate", description="Regret vs. inference experiments for combinatorial bandits"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_experiment_args(sub.add_parser("run", help="run one algorithm over an alpha grid"), True)
    _add_experiment_args(
        sub.add_parser("compare", help="full- vs semi-bandit feedback, matched seeds"), False
    )
    inspect = sub.add_parser("inspect-family", help="spectral constants and estimable arms")
    _add_family_args(inspect)
    inspect.add_argument("--json", action="store_true", help="print JSON instead of text")
    inspect.add_argument("--verbose", "-v", action="store_true")
    return parser


def _family_spec(args: argparse.Namespace) -> FamilySpec:
    return FamilySpec(kind=args.family, d=args.d, m=args.m, d0=args.d0, path=args.family_file)


def config_from_args(args: argparse.Namespace, algo: Optional[str] = None) -> ExperimentConfig:
    try:
        alphas = tuple(parse_float_list(args.alpha))
        values = tuple(parse_float_list(args.mu)) if args.mu else None
    except ValueError as e:
        raise ConfigError(f"could not parse number list: {e}")
    config = ExperimentConfig(
        algo=algo or args.algo,
        family=_family_spec(args),
        n=args.n,
        alphas=alphas,
        trials=args.trials,
        seed=args.seed,
        means=MeanSpec(lo=args.mean_lo, hi=args.mean_hi, values=values),
        checkpoints=args.checkpoints,
        noise=args.noise,
        fixed_instance=args.fixed_instance,
        strict=args.strict,
        workers=args.workers,
        trace_dir=args.trace_dir,
    )
    return config.validate()


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, LOG_LEVEL, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def cmd_run(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    try:
        result = run_experiment(config)
    except TrialError as e:
        if args.out:
            manifest = write_partial_manifest(args.out, config, e)
            log.error("partial results written to %s", manifest)
        raise

    out = args.out or os.path.join(OUTPUT_DIR, f"{config.algo}.{args.format}")
    write_results(result, out, args.format)
    log.info("results written to %s", out)
    if args.summary:
        write_summary(result, args.summary)

    for tr in result.trials:
        for w in sorted(set(tr.warnings)):
            log.debug("trial %d alpha=%g: %s", tr.trial, tr.alpha, shorten(w))
    print(final_summary(result).to_string(index=False))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = config_from_args(args, algo="kl")
    table = compare_feedback(config)
    if args.out:
        table.to_csv(args.out, index=False)
        log.info("comparison written to %s", args.out)
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_inspect_family(args: argparse.Namespace) -> int:
    spec = validate_family_spec(_family_spec(args))
    info = inspect_family(build_family(spec))
    if args.json:
        print(json.dumps(info, indent=2))
        return EXIT_OK
    for key, value in info.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key:>14}: {value}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "inspect-family": cmd_inspect_family}


def _with_default_command(argv: Sequence[str]) -> List[str]:
    argv = list(argv)
    if argv and argv[0] not in SUBCOMMANDS and argv[0] not in ("-h", "--help", "--version"):
        return ["run"] + argv
    return argv


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(_with_default_command(argv))
    _setup_logging(getattr(args, "verbose", False))
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except CombBanditError as e:
        log.error("%s", e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
