"""
Command-line driver: verification suites, rate experiments and training
comparisons. Exit codes: 0 pass, 1 check failure, 2 configuration error.
"""

import argparse
import os
import sys
from typing import Any, Dict, List, Optional

from loguru import logger

from modulation_lab.config import RESULTS_FOLDER
from modulation_lab.domain.experiment import (
    ExperimentConfig,
    load_experiment_config,
    parse_experiment_config,
    save_config_echo,
)
from modulation_lab.exceptions import (
    CheckFailure,
    ConfigurationError,
    FileOperationError,
    ModulationLabError,
)
from modulation_lab.experiments.appendix import perturbed_faddeeva, run_appendix_checks
from modulation_lab.experiments.compare import run_train_compare, save_comparison
from modulation_lab.experiments.rate import rate_within_bounds, run_rate, save_rate
from modulation_lab.experiments.transforms import (
    PHASE_TOLERANCE,
    max_residual,
    phase_identity_battery,
    save_round_trip,
    stft_round_trip,
)
from modulation_lab.networks import parameter_count
from modulation_lab.relu_stft import faddeeva

EXIT_PASS = 0
EXIT_CHECK_FAILURE = 1
EXIT_CONFIG_ERROR = 2

# (dim, modulation units, plain units) budgets of the reference experiments
REFERENCE_BUDGETS = [(1, 300, 400), (2, 300, 450), (1, 48, 64), (2, 50, 75)]


def parse_seed_list(text: str) -> List[int]:
    """Comma-separated non-negative seeds; ``a-b`` expands to an inclusive range."""
    seeds: List[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Invalid seed list: {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError(f"Seed list {text!r} is empty")
    return seeds


def configure_logging(level: Optional[str] = None) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level or os.environ.get("MODLAB_LOG_LEVEL", "INFO"))


def experiment_config(args: argparse.Namespace, kind: str) -> ExperimentConfig:
    """Load ``--config`` (or defaults) with the command line flags applied on top."""
    overrides: Dict[str, Any] = {"experiment": {"kind": kind}}
    if getattr(args, "seed_list", None):
        overrides["experiment"]["seeds"] = args.seed_list
    if getattr(args, "weight", None):
        overrides["maurey"] = {"weight": args.weight}
    if getattr(args, "optimizer", None):
        optimizer: Dict[str, Any] = {"kind": args.optimizer}
        if args.optimizer == "adam":
            optimizer["weight_decay"] = None
        overrides["optimizer"] = optimizer
    if getattr(args, "out", None):
        overrides["output"] = {"directory": args.out}
    if getattr(args, "config", None):
        return load_experiment_config(args.config, overrides)
    return parse_experiment_config({}, overrides)


def cmd_verify_appendix(args: argparse.Namespace) -> int:
    kernel = faddeeva
    if args.inject_erfc_perturbation is not None:
        kernel = perturbed_faddeeva(args.inject_erfc_perturbation)
    result = run_appendix_checks(faddeeva_fn=kernel)
    result.bounds.save(args.out or os.path.join(RESULTS_FOLDER, "appendix"))

    print(f"max |closed form - quadrature|: {result.max_deviation:.3e}")
    print(
        "bounds grid max |closed form - quadrature|: "
        f"{result.bounds.max_reference_deviation:.3e}"
    )
    print(f"V(0, 0) = {result.origin_value.real:.6f}")
    print(
        f"lower-bound violations (reported): {result.bounds.lower_bound_violations}, "
        f"equality points: {result.bounds.equality_points}"
    )
    print(f"decay constant C: {result.bounds.decay_constant:.6g}")
    canonical, unit = result.condition_magnitudes
    print(f"Condition (A) |V(t, tau)|: canonical {canonical:.6g}, unit {unit:.6g}")
    if not result.passed:
        raise CheckFailure(result.failures[0])
    print("PASS")
    return EXIT_PASS


def cmd_stft(args: argparse.Namespace) -> int:
    config = experiment_config(args, "stft")
    out_dir = config.output_dir()
    result = stft_round_trip(config)
    save_round_trip(result, out_dir)
    save_config_echo(config, out_dir)
    print(f"relative L2 round-trip error: {result.relative_error:.3e}")
    print(f"modulation norm (p = q = 1): {result.modulation_norm:.6g}")
    if not result.passed:
        raise CheckFailure(
            f"round-trip error {result.relative_error:.3e} is not below 1e-6"
        )
    return EXIT_PASS


def cmd_phase_identity(args: argparse.Namespace) -> int:
    config = experiment_config(args, "phase_identity")
    out_dir = config.output_dir()
    frame = phase_identity_battery(config, count=args.count)
    save_config_echo(config, out_dir)
    path = os.path.join(out_dir, "phase_identity.csv")
    try:
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        raise FileOperationError(e)
    worst = max_residual(frame)
    print(f"max phase-identity residual over {len(frame)} points: {worst:.3e}")
    if worst >= PHASE_TOLERANCE:
        raise CheckFailure(
            f"phase-identity residual {worst:.3e} is not below {PHASE_TOLERANCE}"
        )
    return EXIT_PASS


def cmd_rate(args: argparse.Namespace) -> int:
    config = experiment_config(args, "rate")
    out_dir = config.output_dir()
    result = run_rate(config)
    save_rate(result, out_dir)
    save_config_echo(config, out_dir)
    print(result.report.summary())
    if not rate_within_bounds(result):
        raise CheckFailure("fitted slope or monotonicity outside the accepted range")
    return EXIT_PASS


def cmd_train_compare(args: argparse.Namespace) -> int:
    config = experiment_config(args, "train_compare")
    result = run_train_compare(config)
    save_comparison(result, config, config.output_dir())
    print(result.final.to_string(index=False))
    return EXIT_PASS


def cmd_params(args: argparse.Namespace) -> int:
    for dim, modulation_units, plain_units in REFERENCE_BUDGETS:
        print(
            f"d={dim}: modulation {modulation_units} units -> "
            f"{parameter_count('modulation', modulation_units, dim)} params, "
            f"plain {plain_units} units -> "
            f"{parameter_count('plain', plain_units, dim)} params"
        )
    if args.units is not None:
        for kind in ("modulation", "plain"):
            print(
                f"d={args.dim}: {kind} {args.units} units -> "
                f"{parameter_count(kind, args.units, args.dim)} params"
            )
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modlab", description="Modulation-space approximation lab"
    )
    parser.add_argument("--log-level", default=None, help="loguru level for stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", help="experiment config (YAML)")
        sub.add_argument("--seed-list", type=parse_seed_list, help="e.g. 0,1,2 or 0-9")
        sub.add_argument("--out", help="output directory")

    verify = commands.add_parser("verify-appendix", help="closed-form ReLU STFT checks")
    verify.add_argument("--out", help="output directory")
    verify.add_argument(
        "--inject-erfc-perturbation", type=float, default=None, help=argparse.SUPPRESS
    )
    verify.set_defaults(handler=cmd_verify_appendix)

    transform = commands.add_parser("stft", help="STFT round trip of the target")
    add_common(transform)
    transform.set_defaults(handler=cmd_stft)

    phase = commands.add_parser("phase-identity", help="phase identity residuals")
    add_common(phase)
    phase.add_argument("--count", type=int, default=100)
    phase.set_defaults(handler=cmd_phase_identity)

    rate = commands.add_parser("rate", help="Maurey sampling rate experiment")
    add_common(rate)
    rate.add_argument("--weight", choices=["local", "global"])
    rate.set_defaults(handler=cmd_rate)

    compare = commands.add_parser("train-compare", help="modulation vs plain ReLU")
    add_common(compare)
    compare.add_argument("--optimizer", choices=["adam", "adamw"])
    compare.set_defaults(handler=cmd_train_compare)

    params = commands.add_parser("params", help="parameter counts")
    params.add_argument("--units", type=int, default=None)
    params.add_argument("--dim", type=int, default=1, choices=[1, 2])
    params.set_defaults(handler=cmd_params)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ConfigurationError as e:
        logger.error(f"Configuration error: {str(e)}")
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except CheckFailure as e:
        print(f"FAIL: {e}")
        return EXIT_CHECK_FAILURE
    except ModulationLabError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        logger.exception(e)
        return EXIT_CHECK_FAILURE
