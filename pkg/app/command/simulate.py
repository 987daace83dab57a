import argparse
from functools import partial
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import Field, model_validator

from app.command.base import (
    BaseCommand,
    CommandConfig,
    CommandResult,
    RunContext,
    apply_overrides,
    load_config,
    parse_float_list,
    write_json,
)
from app.config import config
from app.dynamics.markov import CycleSpec, chain_for_rate, simulate_blinking, write_trace
from app.logger import logger
from app.parallel import map_points
from app.physics.effective_mode import EnumerationLimits, absolute_rate, rate_per_power
from app.schema import ModeSet


_SIMULATE_DESCRIPTION = """\
Simulate blinking photon traces for a grid of (wavelength, temperature) scenarios.
The NV0 -> NV- rate is either fixed (rate_Hz) or taken from an effective-mode set
times a power density. Writes one trace CSV per scenario plus manifest.json with
the true parameters.
"""


class SimulateConfig(CommandConfig):
    schema_: str = Field("simulate/v1", alias="schema")
    wavelengths_nm: List[float] = Field(default_factory=lambda: [590.0])
    temperatures_K: List[float] = Field(default_factory=lambda: [300.0])
    rate_Hz: Optional[float] = Field(None, gt=0, description="Fixed NV0 -> NV- rate")
    mode_set: Optional[ModeSet] = Field(None, description="Effective modes giving R/P")
    power_density: float = Field(1.0, gt=0)
    duration_s: float = Field(600.0, gt=0)
    bin_width_s: float = Field(0.01, gt=0)
    gamma1_Hz: float = Field(default_factory=lambda: config.simulation.gamma1_Hz, gt=0)
    mu1_Hz: float = Field(default_factory=lambda: config.simulation.mu1_Hz, ge=0)
    ionization_rate_Hz: float = Field(
        default_factory=lambda: config.simulation.ionization_rate_Hz, gt=0
    )
    bright_count_rate_Hz: float = Field(
        default_factory=lambda: config.simulation.bright_count_rate_Hz, gt=0
    )
    dark_count_rate_Hz: float = Field(
        default_factory=lambda: config.simulation.dark_count_rate_Hz, ge=0
    )

    @model_validator(mode="after")
    def _rate_source(self) -> "SimulateConfig":
        if self.rate_Hz is None and self.mode_set is None:
            self.rate_Hz = 0.5
        if self.rate_Hz is not None and self.mode_set is not None:
            raise ValueError("give either rate_Hz or mode_set, not both")
        if not self.wavelengths_nm or not self.temperatures_K:
            raise ValueError("at least one wavelength and one temperature are required")
        return self


def _scenario_rate(cfg: SimulateConfig, wavelength_nm: float, temperature_K: float) -> float:
    if cfg.rate_Hz is not None:
        return cfg.rate_Hz
    per_power = rate_per_power(wavelength_nm, temperature_K, cfg.mode_set, limits=EnumerationLimits())
    return absolute_rate(per_power, cfg.power_density)


def _simulate_one(job: dict, cfg: SimulateConfig, output_dir: Path) -> dict:
    chain = chain_for_rate(job["rate_Hz"], cfg.gamma1_Hz, cfg.mu1_Hz)
    cycle = CycleSpec(
        chain=chain,
        ionization_rate=cfg.ionization_rate_Hz,
        bright_count_rate=cfg.bright_count_rate_Hz,
        dark_count_rate=cfg.dark_count_rate_Hz,
    )
    trace = simulate_blinking(
        cycle,
        cfg.duration_s,
        cfg.bin_width_s,
        job["seed"],
        wavelength_nm=job["wavelength_nm"],
        temperature_K=job["temperature_K"],
    )
    write_trace(output_dir / job["file"], trace)
    return {**job, "chain": chain.model_dump(), "n_bins": len(trace.counts)}


class SimulateCommand(BaseCommand):
    name: str = "simulate"
    description: str = _SIMULATE_DESCRIPTION

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", type=Path, help="simulate/v1 JSON config")
        parser.add_argument("--rate", type=float, dest="rate_Hz", help="Fixed NV0 -> NV- rate (Hz)")
        parser.add_argument("--wavelengths", help="Comma list or start:stop:step (nm)")
        parser.add_argument("--temperatures", help="Comma list or start:stop:step (K)")
        parser.add_argument("--duration", type=float, dest="duration_s", help="Trace length (s)")
        parser.add_argument("--bin-width", type=float, dest="bin_width_s", help="Bin width (s)")

    def execute(self, context: RunContext, args: argparse.Namespace) -> CommandResult:
        cfg = load_config(getattr(args, "config", None), SimulateConfig, "simulate/v1")
        cfg = apply_overrides(
            cfg,
            {
                "rate_Hz": getattr(args, "rate_Hz", None),
                "wavelengths_nm": parse_float_list(getattr(args, "wavelengths", None)),
                "temperatures_K": parse_float_list(getattr(args, "temperatures", None)),
                "duration_s": getattr(args, "duration_s", None),
                "bin_width_s": getattr(args, "bin_width_s", None),
            },
        )

        scenarios = [(w, t) for t in cfg.temperatures_K for w in cfg.wavelengths_nm]
        seeds = np.random.SeedSequence(context.seed).generate_state(len(scenarios))
        jobs = [
            {
                "file": f"traces/trace_{w:g}nm_{t:g}K.csv",
                "wavelength_nm": w,
                "temperature_K": t,
                "rate_Hz": _scenario_rate(cfg, w, t),
                "seed": int(seed),
            }
            for (w, t), seed in zip(scenarios, seeds)
        ]
        entries = map_points(
            partial(_simulate_one, cfg=cfg, output_dir=context.output_dir), jobs, context.workers
        )
        manifest = {
            "schema": "manifest/v1",
            "seed": context.seed,
            "config": cfg.model_dump(mode="json", by_alias=True),
            "traces": entries,
        }
        manifest_path = write_json(context.output_dir / "manifest.json", manifest)
        logger.info(f"Wrote {len(entries)} traces to {context.output_dir / 'traces'}")
        return CommandResult(
            output=f"{len(entries)} traces",
            files=[str(context.output_dir / e["file"]) for e in entries] + [str(manifest_path)],
        )
