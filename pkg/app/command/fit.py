import argparse
from pathlib import Path

from app.command.base import BaseCommand, CommandResult, RunContext
from app.command.command_collection import EXIT_NOT_CONVERGED
from app.dynamics.blinking import read_rates
from app.exceptions import CommandError
from app.fitting.fit import EffectiveModeModelConfig, FitConfig, fit, load_fit_config
from app.fitting.report import fit_report
from app.logger import logger


class FitCommand(BaseCommand):
    name: str = "fit"
    description: str = "Fit a rate model to a rates CSV and write a fit report."

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("data", type=Path, help="Rates CSV (rates/v1)")
        parser.add_argument("--config", type=Path, help="fit/v1 JSON config")
        parser.add_argument(
            "--strict", action="store_true", help="Exit with code 3 when the fit does not converge"
        )
        parser.add_argument("--multistart", type=int, help="Number of simplex starts")

    def execute(self, context: RunContext, args: argparse.Namespace) -> CommandResult:
        config_path = getattr(args, "config", None)
        if config_path is not None:
            cfg = load_fit_config(config_path)
            base_dir = Path(config_path).parent
        else:
            # default: the two effective modes with the acoustic S_k per temperature
            cfg = FitConfig(
                model=EffectiveModeModelConfig(kind="effective_mode", mode_energies_meV=[43.0, 9.0])
            )
            base_dir = Path.cwd()
        if getattr(args, "multistart", None) is not None:
            cfg = cfg.model_copy(update={"multistart": args.multistart})

        data = read_rates(args.data)
        try:
            problem = cfg.build_problem(data, base_dir)
        except ValueError as e:
            raise CommandError(f"invalid fit problem: {e}") from None
        result = fit(problem, cfg.settings(), seed=context.seed, workers=context.workers)
        report = fit_report(result, problem)

        report_path = report.write(context.output_dir / "fit_report.json")
        files = [str(report_path)]
        if report.coupling_spectrum:
            files.append(str(report.write_coupling_csv(context.output_dir / "coupling_spectrum.csv")))

        summary = ", ".join(f"{p.name}={p.value:.4g}" for p in report.parameters)
        logger.info(f"Fit {'converged' if result.converged else 'NOT converged'}: {summary}")
        outcome = CommandResult(output=summary, files=files)
        if not result.converged and getattr(args, "strict", False):
            outcome.exit_code = EXIT_NOT_CONVERGED
            outcome.error = "fit did not converge (--strict)"
        return outcome
