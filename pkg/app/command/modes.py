import argparse
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.command.base import (
    BaseCommand,
    CommandConfig,
    CommandResult,
    RunContext,
    load_config,
)
from app.exceptions import CommandError
from app.formats import write_table
from app.logger import logger
from app.physics.lattice import (
    ILLUSTRATIVE_NOTE,
    DisplacementField,
    ToyLattice,
    bin_modes,
    diatomic_chain_dispersion,
    gaussian_push,
    lattice_pipeline,
    monatomic_chain_dispersion,
    select_top_modes,
    write_modes,
)
from app.schema import ModeSet


class LatticeBuilder(BaseModel):
    kind: Literal["monatomic_chain", "diatomic_chain", "square_lattice"]
    size: List[int] = Field(..., min_length=1, max_length=2, description="Sites, cells or [nx, ny]")
    masses: List[float] = Field(..., min_length=1, max_length=2, description="amu")
    k: float = Field(..., gt=0, description="eV/A^2")
    k_t: float = Field(0.0, ge=0)
    spacing: float = Field(1.0, gt=0)
    boundary: Literal["periodic", "free"] = "periodic"

    model_config = ConfigDict(extra="forbid")

    def build(self) -> ToyLattice:
        if self.kind == "monatomic_chain":
            return ToyLattice.monatomic_chain(
                self.size[0], self.masses[0], self.k, self.spacing, self.boundary
            )
        if self.kind == "diatomic_chain":
            if len(self.masses) != 2:
                raise CommandError("a diatomic chain needs two masses")
            return ToyLattice.diatomic_chain(
                self.size[0], self.masses[0], self.masses[1], self.k, self.spacing
            )
        if len(self.size) != 2:
            raise CommandError("a square lattice needs size [nx, ny]")
        return ToyLattice.square_lattice(
            self.size[0], self.size[1], self.masses[0], self.k, self.k_t, self.spacing, self.boundary
        )

    def dispersion(self) -> Optional[np.ndarray]:
        """Closed-form frequencies for periodic chains, None otherwise."""
        if self.kind == "monatomic_chain" and self.boundary == "periodic":
            return monatomic_chain_dispersion(self.size[0], self.masses[0], self.k)
        if self.kind == "diatomic_chain" and len(self.masses) == 2:
            return diatomic_chain_dispersion(self.size[0], self.masses[0], self.masses[1], self.k)
        return None


class PushSpec(BaseModel):
    center: int = Field(0, ge=0)
    amplitude: float = 0.01
    width: float = Field(1.0, gt=0)

    model_config = ConfigDict(extra="forbid")


class ExportSpec(BaseModel):
    top_k: int = Field(2, ge=1)
    bin_edges_meV: Optional[List[float]] = None
    lorentzian_fwhm_meV: float = Field(5.0, gt=0)
    scale: float = Field(1.0, gt=0)

    model_config = ConfigDict(extra="forbid")


class ModesConfig(CommandConfig):
    schema_: str = Field("modes/v1", alias="schema")
    builder: Optional[LatticeBuilder] = None
    lattice: Optional[ToyLattice] = None
    push: Optional[PushSpec] = None
    delta_R: Optional[List[List[float]]] = None
    export: ExportSpec = Field(default_factory=ExportSpec)

    @model_validator(mode="after")
    def _one_lattice(self) -> "ModesConfig":
        if (self.builder is None) == (self.lattice is None):
            raise ValueError("give exactly one of builder or lattice")
        if self.push is not None and self.delta_R is not None:
            raise ValueError("give either push or delta_R, not both")
        return self


class ModesCommand(BaseCommand):
    name: str = "modes"
    description: str = (
        "Normal modes and partial Huang-Rhys factors of an illustrative toy lattice."
    )

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("lattice", type=Path, help="modes/v1 lattice JSON")
        parser.add_argument(
            "--export-modeset", action="store_true", help="Also write an effective-mode set"
        )
        parser.add_argument("--top-k", type=int, help="Modes kept in the exported set")

    def execute(self, context: RunContext, args: argparse.Namespace) -> CommandResult:
        cfg = load_config(args.lattice, ModesConfig, "modes/v1")
        lattice = cfg.lattice if cfg.lattice is not None else cfg.builder.build()

        if cfg.push is not None:
            displacement = gaussian_push(lattice, cfg.push.center, cfg.push.amplitude, cfg.push.width)
        elif cfg.delta_R is not None:
            displacement = DisplacementField(delta_R=cfg.delta_R)
        else:
            displacement = DisplacementField(
                delta_R=np.zeros((lattice.n_sites, lattice.dimension)).tolist()
            )

        modes, delta_q, spectrum = lattice_pipeline(lattice, displacement)
        files = [str(write_modes(context.output_dir / "modes.csv", modes, delta_q))]

        oracle = cfg.builder.dispersion() if cfg.builder is not None else None
        if oracle is not None:
            frame = pd.DataFrame(
                {"mode_index": np.arange(len(modes)), "omega": modes.omega, "omega_oracle": oracle}
            )
            files.append(
                str(
                    write_table(
                        context.output_dir / "dispersion.csv",
                        frame,
                        schema="dispersion/v1",
                        meta={"note": ILLUSTRATIVE_NOTE},
                    )
                )
            )

        if getattr(args, "export_modeset", False):
            top_k = args.top_k if getattr(args, "top_k", None) is not None else cfg.export.top_k
            reduced = (
                bin_modes(spectrum, cfg.export.bin_edges_meV)
                if cfg.export.bin_edges_meV is not None
                else spectrum
            )
            selected = select_top_modes(reduced, top_k)
            mode_set = ModeSet(
                modes=selected,
                lorentzian_fwhm_meV=cfg.export.lorentzian_fwhm_meV,
                scale=cfg.export.scale,
            )
            path = context.output_dir / "modeset.json"
            path.write_text(mode_set.model_dump_json(indent=2) + "\n", encoding="utf-8")
            files.append(str(path))

        logger.info(
            f"{len(modes)} modes ({modes.n_zero_modes} zero), total S = "
            f"{sum(m.huang_rhys for m in spectrum):.6g}"
        )
        return CommandResult(output=f"{len(modes)} modes, {modes.n_zero_modes} zero modes", files=files)
