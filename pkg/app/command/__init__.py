from app.command.analyze import AnalyzeCommand
from app.command.base import BaseCommand, CommandResult, RunContext
from app.command.command_collection import CommandCollection
from app.command.fit import FitCommand
from app.command.modes import ModesCommand
from app.command.rate import RateCommand
from app.command.simulate import SimulateCommand


__all__ = [
    "BaseCommand",
    "CommandResult",
    "RunContext",
    "CommandCollection",
    "SimulateCommand",
    "AnalyzeCommand",
    "RateCommand",
    "FitCommand",
    "ModesCommand",
]
