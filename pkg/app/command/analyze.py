import argparse
from pathlib import Path
from typing import Literal, Optional

from pydantic import Field

from app.command.base import (
    BaseCommand,
    CommandConfig,
    CommandResult,
    RunContext,
    apply_overrides,
    load_config,
    write_json,
)
from app.command.command_collection import EXIT_RUNTIME
from app.config import AnalysisSettings, config
from app.dynamics.blinking import analyze_trace, write_rates
from app.dynamics.markov import read_trace
from app.exceptions import CommandError, FormatError
from app.logger import logger
from app.schema import RateCurve


class AnalyzeConfig(CommandConfig):
    schema_: str = Field("analyze/v1", alias="schema")
    threshold_method: Literal["midpoint", "fixed"] = Field(
        default_factory=lambda: config.analysis.threshold_method
    )
    threshold_value: Optional[float] = Field(
        default_factory=lambda: config.analysis.threshold_value
    )
    min_dwell_bins: int = Field(default_factory=lambda: config.analysis.min_dwell_bins, ge=1)
    separation_factor: float = Field(
        default_factory=lambda: config.analysis.separation_factor, gt=0
    )

    def settings(self) -> AnalysisSettings:
        return AnalysisSettings(
            threshold_method=self.threshold_method,
            threshold_value=self.threshold_value,
            min_dwell_bins=self.min_dwell_bins,
            separation_factor=self.separation_factor,
        )


class AnalyzeCommand(BaseCommand):
    name: str = "analyze"
    description: str = "Estimate NV0 -> NV- rates from blinking traces (rates CSV + diagnostics)."

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("traces", nargs="*", type=Path, help="Trace CSV files")
        parser.add_argument("--config", type=Path, help="analyze/v1 JSON config")
        parser.add_argument("--threshold-method", choices=["midpoint", "fixed"])
        parser.add_argument("--threshold", type=float, dest="threshold_value")
        parser.add_argument("--min-dwell-bins", type=int)

    def execute(self, context: RunContext, args: argparse.Namespace) -> CommandResult:
        traces = list(getattr(args, "traces", None) or [])
        if not traces:
            raise CommandError("analyze needs at least one trace file")
        cfg = load_config(getattr(args, "config", None), AnalyzeConfig, "analyze/v1")
        cfg = apply_overrides(
            cfg,
            {
                "threshold_method": getattr(args, "threshold_method", None),
                "threshold_value": getattr(args, "threshold_value", None),
                "min_dwell_bins": getattr(args, "min_dwell_bins", None),
            },
        )
        settings = cfg.settings()

        points, diagnostics, failures = [], [], 0
        seen = set()
        for path in traces:
            entry = {"file": str(path)}
            try:
                trace = read_trace(path)
            except FormatError as e:
                entry["error"] = str(e)
                failures += 1
                diagnostics.append(entry)
                logger.warning(f"Skipping {path}: {e}")
                continue
            point, details = analyze_trace(trace, settings)
            entry.update(details)
            if point is not None and point.key in seen:
                entry["error"] = f"duplicate (wavelength, temperature) {point.key}"
                point = None
            if point is None:
                failures += 1
            else:
                seen.add(point.key)
                points.append(point)
            diagnostics.append(entry)

        curve = RateCurve(points=sorted(points, key=lambda p: (p.temperature_K, p.wavelength_nm)))
        rates_path = write_rates(context.output_dir / "rates.csv", curve)
        diagnostics_path = write_json(
            context.output_dir / "analysis_diagnostics.json",
            {"schema": "analysis_diagnostics/v1", "traces": diagnostics},
        )
        logger.info(f"Analysed {len(traces)} traces: {len(points)} rates, {failures} failures")
        result = CommandResult(
            output=f"{len(points)} rates, {failures} failures",
            files=[str(rates_path), str(diagnostics_path)],
        )
        if failures:
            result.exit_code = EXIT_RUNTIME
            result.error = f"{failures} of {len(traces)} traces could not be analysed"
        return result
