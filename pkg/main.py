#!/usr/bin/env python3
"""
Main entry point for the MGA-MSGD elastostatics solver.
"""
import os
import sys
import argparse
import logging
from typing import List, Optional, Tuple

from dotenv import load_dotenv

from mgamsgd.core.errors import ConfigurationError
from mgamsgd.utils.commands import EXIT_CONFIG, CommandRegistry
from mgamsgd.utils.config_manager import ConfigManager
from mgamsgd.utils.logger import setup_logging

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


def _grid(text: str) -> Tuple[int, int, int]:
    try:
        nx, ny, nz = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Grid must look like 5x5x5, got {text}")
    return nx, ny, nz


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", "-c",
        help="Path to configuration file (default: $MGAMSGD_CONFIG or built-in defaults)",
        default=argparse.SUPPRESS,
    )
    common.add_argument(
        "--log-level",
        help="Logging level",
        choices=LOG_LEVELS,
        default=argparse.SUPPRESS,
    )
    common.add_argument("--progress", action="store_true", default=argparse.SUPPRESS, help="Show progress bars")

    parser = argparse.ArgumentParser(description="Mesh-free 3D elastostatics with MGA-MSGD trained networks",
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", parents=[common], help="Train one network")
    train.add_argument("--seed", type=int, help="Override the configured seed")
    train.add_argument("--out", default="runs/train", help="Output directory")
    train.add_argument("--time-budget", type=float, dest="time_budget", help="Wall-clock budget in seconds")

    compare = sub.add_parser("compare", parents=[common], help="Compare MGA-MSGD with SGD and Adam")
    compare.add_argument("--budget-seconds", type=float, dest="budget_seconds", default=60.0)
    compare.add_argument("--seeds", type=int, default=1)
    compare.add_argument("--seed", type=int, help="First seed")
    compare.add_argument("--out", default="runs/compare", help="Output directory")

    field = sub.add_parser("field", parents=[common], help="Evaluate a checkpoint on a grid")
    field.add_argument("--checkpoint", required=True)
    field.add_argument("--grid", type=int, default=10)
    field.add_argument("--out", default="field.csv")
    field.add_argument("--error", action="store_true", help="Append the error against the uniaxial solution")

    sensitivity = sub.add_parser("sensitivity", parents=[common], help="Morris one-at-a-time sweep")
    sensitivity.add_argument("--levels", type=int)
    sensitivity.add_argument("--reps", type=int)
    sensitivity.add_argument("--workers", type=int, default=1)
    sensitivity.add_argument("--seed", type=int)
    sensitivity.add_argument("--out", default="sensitivity.csv")

    gamma = sub.add_parser("gamma", parents=[common], help="Dirichlet weight study")
    gamma.add_argument("--gammas", type=float, nargs="+")
    gamma.add_argument("--seeds", type=int, default=3)
    gamma.add_argument("--seed", type=int)
    gamma.add_argument("--out", default="gamma.csv")

    grids = sub.add_parser("grids", parents=[common], help="Sampling grid study")
    grids.add_argument("--grids", type=_grid, nargs="+", help="Grids such as 30x2x2 5x5x5")
    grids.add_argument("--reps", type=int, default=3)
    grids.add_argument("--seed", type=int)
    grids.add_argument("--out", default="grids.csv")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    load_dotenv()
    args = vars(build_parser().parse_args(argv))

    command = args.pop("command")
    config_path = args.get("config") or os.environ.get("MGAMSGD_CONFIG")
    args["config"] = config_path
    log_level = args.pop("log_level", None) or os.environ.get("MGAMSGD_LOG_LEVEL", "INFO")
    progress = args.pop("progress", False)

    try:
        config_manager = ConfigManager(config_path)
    except ConfigurationError as e:
        setup_logging({"level": log_level})
        logging.getLogger(__name__).error(f"Configuration error: {e}")
        return EXIT_CONFIG

    logging_config = dict(config_manager.get("logging", {}) or {})
    logging_config["level"] = log_level
    setup_logging(logging_config)

    registry = CommandRegistry({"progress": progress})
    return registry.execute(command, args)


def cli():
    """Console script wrapper."""
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nExiting...")
        sys.exit(130)


if __name__ == "__main__":
    cli()
