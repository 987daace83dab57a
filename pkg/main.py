#!/usr/bin/env python
import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

from app.command import (
    AnalyzeCommand,
    CommandCollection,
    FitCommand,
    ModesCommand,
    RateCommand,
    RunContext,
    SimulateCommand,
)
from app.command.command_collection import EXIT_CONFIG
from app.config import config
from app.logger import define_log_level, logger


COMMANDS = CommandCollection(
    SimulateCommand(),
    AnalyzeCommand(),
    RateCommand(),
    FitCommand(),
    ModesCommand(),
)


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="nvcycle", description="Phonon-assisted NV charge-cycling toolkit"
    )
    parser.add_argument("--seed", type=int, default=0, help="Random seed")
    parser.add_argument(
        "--output-dir",
        type=Path,
        help=f"Output directory (default: ${config.output.env_var} or '{config.output.directory}')",
    )
    parser.add_argument(
        "--workers", type=int, default=config.output.workers, help="Processes for grid work"
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    subparsers = parser.add_subparsers(dest="command", required=True)
    COMMANDS.add_parsers(subparsers)
    return parser.parse_args(argv)


def resolve_output_dir(flag: Optional[Path]) -> Path:
    if flag is not None:
        return flag
    return Path(os.environ.get(config.output.env_var) or config.output.directory)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the nvcycle command line."""
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else 0

    if args.verbose:
        define_log_level("DEBUG", config.logging.logfile_level)
    elif args.quiet:
        define_log_level("WARNING", config.logging.logfile_level)

    if args.seed < 0 or args.workers < 1:
        logger.error("--seed must be non-negative and --workers at least 1")
        return EXIT_CONFIG
    context = RunContext(
        seed=args.seed, output_dir=resolve_output_dir(args.output_dir), workers=args.workers
    )

    try:
        result = COMMANDS.execute(name=args.command, context=context, args=args)
    except KeyboardInterrupt:
        logger.warning("Operation interrupted.")
        return 1

    if result.error:
        logger.error(result.error)
    else:
        logger.info(f"{args.command}: {result.output}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
