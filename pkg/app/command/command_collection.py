"""Collection class dispatching sub-commands by name."""
import argparse
from typing import Dict

from pydantic import ValidationError

from app.command.base import BaseCommand, CommandFailure, CommandResult, RunContext
from app.exceptions import CommandError, FormatError, NVCycleError
from app.logger import logger


EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3


class CommandCollection:
    """A collection of defined commands."""

    def __init__(self, *commands: BaseCommand):
        self.commands = commands
        self.command_map: Dict[str, BaseCommand] = {c.name: c for c in commands}

    def __iter__(self):
        return iter(self.commands)

    def add_parsers(self, subparsers: argparse._SubParsersAction) -> None:
        for command in self.commands:
            parser = subparsers.add_parser(command.name, help=command.description)
            command.add_arguments(parser)

    def execute(self, *, name: str, context: RunContext, args: argparse.Namespace) -> CommandResult:
        command = self.command_map.get(name)
        if not command:
            return CommandFailure(error=f"Command {name} is invalid", exit_code=EXIT_CONFIG)
        try:
            return command(context, args)
        except CommandError as e:
            return CommandFailure(error=e.message, exit_code=EXIT_CONFIG)
        except (FormatError, ValidationError) as e:
            return CommandFailure(error=str(e), exit_code=EXIT_CONFIG)
        except NVCycleError as e:
            logger.error(f"Command {name} failed: {e}")
            return CommandFailure(error=f"{type(e).__name__}: {e}", exit_code=EXIT_RUNTIME)
        except OSError as e:
            logger.error(f"Command {name} could not write its output: {e}")
            return CommandFailure(error=f"{type(e).__name__}: {e}", exit_code=EXIT_RUNTIME)

    def get_command(self, name: str) -> BaseCommand:
        return self.command_map.get(name)
