"""Fit reports: parameter table, per-point residuals and coupling spectra."""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from app.fitting.fit import EffectiveModeModel, FitProblem, FitResult
from app.formats import write_table
from app.physics.effective_mode import coupling_spectrum


class ParameterRow(BaseModel):
    name: str
    value: float
    stderr: Optional[float] = None
    min: Optional[float] = None
    max: Optional[float] = None
    vary: bool = False


class ResidualRow(BaseModel):
    wavelength_nm: float
    temperature_K: float
    rate_Hz: float
    fitted_Hz: Optional[float]
    residual: float


class CouplingRow(BaseModel):
    temperature_K: float
    energy_meV: float
    coupling: float


class FitReport(BaseModel):
    schema_: Literal["fit_report/v1"] = Field("fit_report/v1", alias="schema")
    rate_model: str
    loss_space: str
    converged: bool
    flagged: bool = Field(..., description="True when the fit did not converge")
    chisqr: float
    n_evals: int
    parameters: List[ParameterRow]
    residuals: List[ResidualRow]
    coupling_spectrum: List[CouplingRow] = Field(default_factory=list)
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    model_config = {"populate_by_name": True}

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path

    def write_coupling_csv(self, path: Path) -> Path:
        frame = pd.DataFrame(
            [row.model_dump() for row in self.coupling_spectrum],
            columns=["temperature_K", "energy_meV", "coupling"],
        )
        return write_table(path, frame, schema="coupling/v1", meta={"rate_model": self.rate_model})


def _coupling_rows(
    result: FitResult, problem: FitProblem, grid_points: int
) -> List[CouplingRow]:
    model = problem.model
    if not isinstance(model, EffectiveModeModel):
        return []
    rows = []
    for temperature in problem.data.temperatures:
        modes = model.mode_set(result.params, temperature, problem.per_temperature)
        top = max(modes.energies) + 10.0 * modes.lorentzian_fwhm_meV
        grid = np.linspace(0.0, top, grid_points)
        rows.extend(
            CouplingRow(temperature_K=temperature, energy_meV=e, coupling=s)
            for e, s in coupling_spectrum(modes, grid)
        )
    return rows


def _finite(value: Optional[float]) -> Optional[float]:
    return value if value is not None and np.isfinite(value) else None


def fit_report(result: FitResult, problem: FitProblem, grid_points: int = 201) -> FitReport:
    specs = {p.name: p for p in problem.parameters}
    parameters = []
    for name, value in result.params.items():
        spec = specs.get(name)
        parameters.append(
            ParameterRow(
                name=name,
                value=value,
                stderr=_finite(result.stderr.get(name)),
                min=_finite(spec.min) if spec else None,
                max=_finite(spec.max) if spec else None,
                vary=spec.vary if spec else False,
            )
        )
    residuals = [
        ResidualRow(
            wavelength_nm=point.wavelength_nm,
            temperature_K=point.temperature_K,
            rate_Hz=point.rate_Hz,
            fitted_Hz=None if np.isnan(rate) else rate,
            residual=residual,
        )
        for point, rate, residual in zip(problem.data, result.fitted_rates, result.residuals)
    ]
    diagnostics = dict(result.diagnostics)
    if not result.converged:
        diagnostics.setdefault("message", "optimizer stopped before convergence")
    return FitReport(
        rate_model=problem.model.kind,
        loss_space=problem.loss_space,
        converged=result.converged,
        flagged=not result.converged,
        chisqr=result.chisqr,
        n_evals=result.n_evals,
        parameters=parameters,
        residuals=residuals,
        coupling_spectrum=_coupling_rows(result, problem, grid_points),
        diagnostics=diagnostics,
    )
