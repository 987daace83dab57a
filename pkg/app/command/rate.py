import argparse
import json
from pathlib import Path
from typing import List, Literal, Optional

import pandas as pd
from pydantic import Field, ValidationError

from app.command.base import (
    BaseCommand,
    CommandConfig,
    CommandResult,
    RunContext,
    apply_overrides,
    load_config,
    parse_float_list,
)
from app.config import config
from app.exceptions import CommandError, NVCycleError
from app.formats import write_table
from app.logger import logger
from app.physics.effective_mode import EnumerationLimits, rate_curve
from app.physics.quasi_continuum import (
    QuasiContinuumParams,
    SpectrumFormat,
    load_spectrum,
    qc_rate_curve,
)
from app.schema import ModeSet, RateCurve


class RateConfig(CommandConfig):
    schema_: str = Field("rate/v1", alias="schema")
    wavelengths_nm: List[float] = Field(
        default_factory=lambda: [580.0 + i for i in range(21)]
    )
    temperatures_K: List[float] = Field(default_factory=lambda: [100.0, 200.0, 300.0])
    zpl_nm: float = Field(default_factory=lambda: config.units.nv0_zpl_nm, gt=0)
    spectrum_path: Optional[str] = None
    spectrum_format: SpectrumFormat = "detuning"
    scale: float = Field(1.0, gt=0)
    mode_set: Optional[ModeSet] = None
    modes_path: Optional[str] = None
    max_quanta_per_mode: int = Field(
        default_factory=lambda: config.enumeration.max_quanta_per_mode, ge=0
    )


def load_mode_set(path: Path) -> ModeSet:
    try:
        return ModeSet.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError) as e:
        raise CommandError(f"cannot read mode set {path}: {e}") from None
    except ValidationError as e:
        raise CommandError(f"invalid mode set {path}: {e}") from None


def _at_grid(error: NVCycleError, cfg: RateConfig) -> NVCycleError:
    """Attach the evaluated grid to an error message."""
    error.args = (
        f"{error} (wavelengths {min(cfg.wavelengths_nm):g}-{max(cfg.wavelengths_nm):g} nm, "
        f"temperatures {cfg.temperatures_K} K)",
    )
    return error


def curve_frame(curve: RateCurve) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "wavelength_nm": p.wavelength_nm,
                "temperature_K": p.temperature_K,
                "rate_per_power": p.rate_Hz,
            }
            for p in curve
        ],
        columns=["wavelength_nm", "temperature_K", "rate_per_power"],
    )


class RateCommand(BaseCommand):
    name: str = "rate"
    description: str = "Evaluate the quasi-continuum (qc) or effective-mode (em) rate on a grid."

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("model", choices=["qc", "em"], help="Rate model")
        parser.add_argument("--config", type=Path, help="rate/v1 JSON config")
        parser.add_argument("--spectrum", dest="spectrum_path", help="Emission spectrum CSV (qc)")
        parser.add_argument("--spectrum-format", choices=["detuning", "photon_energy"])
        parser.add_argument("--modes", dest="modes_path", help="Mode set JSON (em)")
        parser.add_argument("--wavelengths", help="Comma list or start:stop:step (nm)")
        parser.add_argument("--temperatures", help="Comma list or start:stop:step (K)")
        parser.add_argument("--scale", type=float, help="Rate prefactor (qc)")

    def execute(self, context: RunContext, args: argparse.Namespace) -> CommandResult:
        cfg = load_config(getattr(args, "config", None), RateConfig, "rate/v1")
        cfg = apply_overrides(
            cfg,
            {
                "spectrum_path": getattr(args, "spectrum_path", None),
                "spectrum_format": getattr(args, "spectrum_format", None),
                "modes_path": getattr(args, "modes_path", None),
                "wavelengths_nm": parse_float_list(getattr(args, "wavelengths", None)),
                "temperatures_K": parse_float_list(getattr(args, "temperatures", None)),
                "scale": getattr(args, "scale", None),
            },
        )
        model: Literal["qc", "em"] = args.model
        for wavelength in cfg.wavelengths_nm:
            if wavelength < cfg.zpl_nm:
                raise CommandError(
                    f"wavelength {wavelength} nm lies above the ZPL ({cfg.zpl_nm} nm)"
                )

        curve = self._evaluate(model, cfg, context.workers)

        path = write_table(
            context.output_dir / f"rate_curve_{model}.csv",
            curve_frame(curve),
            schema="rate_curve/v1",
            meta={"model": model, "zpl_nm": cfg.zpl_nm},
        )
        logger.info(f"Wrote {len(curve)} rate points to {path}")
        return CommandResult(output=f"{len(curve)} points", files=[str(path)])

    @staticmethod
    def _evaluate(model: str, cfg: RateConfig, workers: int) -> RateCurve:
        if model == "qc":
            if cfg.spectrum_path is None:
                raise CommandError("the qc model needs --spectrum or spectrum_path")
            spectrum = load_spectrum(cfg.spectrum_path, cfg.spectrum_format, zpl_nm=cfg.zpl_nm)
            params = QuasiContinuumParams(scale=cfg.scale, zpl_nm=cfg.zpl_nm)
            try:
                return qc_rate_curve(
                    cfg.wavelengths_nm, cfg.temperatures_K, spectrum, params, workers
                )
            except NVCycleError as e:
                raise _at_grid(e, cfg)

        if cfg.mode_set is not None and cfg.modes_path is not None:
            raise CommandError("give either mode_set or a modes file, not both")
        modes = cfg.mode_set
        if cfg.modes_path is not None:
            modes = load_mode_set(Path(cfg.modes_path))
        if modes is None:
            raise CommandError("the em model needs --modes or mode_set")
        limits = EnumerationLimits(max_quanta_per_mode=cfg.max_quanta_per_mode)
        try:
            return rate_curve(
                cfg.wavelengths_nm, cfg.temperatures_K, modes, cfg.zpl_nm, limits, workers
            )
        except NVCycleError as e:
            raise _at_grid(e, cfg)
