"""Least-squares fits of the rate models to measured rate curves.

Free parameters live in an lmfit Parameters set. The overall scale is fitted as
log10_scale (so log-space residuals see it as an additive offset) and exposed
as the derived parameter `scale`. Optimisation runs a bounded Nelder-Mead
simplex from one or more starts, then optionally polishes the best point with
bounded least squares to obtain standard errors.
"""

import json
import math
import re
from functools import partial
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Mapping, Optional, Sequence, Union

import numpy as np
from lmfit import Parameters, minimize
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app.config import FittingSettings, config
from app.exceptions import CommandError, NVCycleError
from app.logger import logger
from app.parallel import map_points
from app.physics.effective_mode import EnumerationLimits, rate_per_power_many
from app.physics.quasi_continuum import (
    EmissionSpectrum,
    QuasiContinuumParams,
    SpectrumFormat,
    load_spectrum,
    qc_rate_per_power,
)
from app.physics.units import PositiveEnergyMeV
from app.schema import ModeSet, PhononMode, RateCurve, RatePoint


_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
LossSpace = Literal["log_rate", "linear_rate"]


def temperature_tag(temperature_K: float) -> str:
    return "T" + f"{temperature_K:g}".replace(".", "p")


def energy_label(energy_meV: float) -> str:
    return f"{energy_meV:g}meV".replace(".", "p")


class ParameterSpec(BaseModel):
    name: str
    value: float
    min: float = -math.inf
    max: float = math.inf
    vary: bool = True

    @model_validator(mode="after")
    def _check_bounds(self) -> "ParameterSpec":
        if not _IDENTIFIER.match(self.name):
            raise ValueError(f"parameter name {self.name!r} is not an identifier")
        if self.vary:
            if not (math.isfinite(self.min) and math.isfinite(self.max)):
                raise ValueError(f"free parameter {self.name} needs finite bounds")
            if not self.min < self.max:
                raise ValueError(f"empty bounds for {self.name}: [{self.min}, {self.max}]")
            if not self.min <= self.value <= self.max:
                raise ValueError(f"initial value of {self.name} lies outside its bounds")
        return self


class QuasiContinuumModel(BaseModel):
    kind: Literal["quasi_continuum"] = "quasi_continuum"
    spectrum: EmissionSpectrum
    zpl_nm: float = Field(default_factory=lambda: config.units.nv0_zpl_nm, gt=0)


class EffectiveModeModel(BaseModel):
    """Fixed mode energies; S_k, Gamma and the scale are fitted"""

    kind: Literal["effective_mode"] = "effective_mode"
    mode_energies_meV: List[PositiveEnergyMeV] = Field(..., min_length=1)
    labels: List[str] = Field(default_factory=list)
    zpl_nm: float = Field(default_factory=lambda: config.units.nv0_zpl_nm, gt=0)
    max_quanta_per_mode: int = Field(
        default_factory=lambda: config.enumeration.max_quanta_per_mode, ge=0
    )
    fit_energies: bool = Field(False, description="Also fit the mode energies")

    @model_validator(mode="after")
    def _default_labels(self) -> "EffectiveModeModel":
        if not self.labels:
            self.labels = [energy_label(e) for e in self.mode_energies_meV]
        if len(self.labels) != len(self.mode_energies_meV):
            raise ValueError("one label per mode energy is required")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("mode labels must be unique")
        for label in self.labels:
            if not _IDENTIFIER.match(f"S_{label}"):
                raise ValueError(f"label {label!r} cannot form a parameter name")
        return self

    @property
    def limits(self) -> EnumerationLimits:
        return EnumerationLimits(max_quanta_per_mode=self.max_quanta_per_mode)

    def huang_rhys_name(self, label: str, temperature_K: float, per_temperature: Sequence[str]) -> str:
        if label in per_temperature:
            return f"S_{label}_{temperature_tag(temperature_K)}"
        return f"S_{label}"

    def mode_set(
        self,
        values: Mapping[str, float],
        temperature_K: float,
        per_temperature: Sequence[str] = (),
    ) -> ModeSet:
        """Unit-scale ModeSet at one temperature from parameter values."""
        modes = []
        for label, energy in zip(self.labels, self.mode_energies_meV):
            modes.append(
                PhononMode(
                    energy_meV=values[f"E_{label}"] if self.fit_energies else energy,
                    huang_rhys=values[self.huang_rhys_name(label, temperature_K, per_temperature)],
                    label=label,
                )
            )
        return ModeSet(modes=modes, lorentzian_fwhm_meV=values["gamma"], scale=1.0)


ModelSpec = Annotated[
    Union[QuasiContinuumModel, EffectiveModeModel], Field(discriminator="kind")
]


def required_parameters(
    model: ModelSpec, temperatures: Sequence[float], per_temperature: Sequence[str] = ()
) -> List[str]:
    names = ["log10_scale"]
    if isinstance(model, EffectiveModeModel):
        names.append("gamma")
        for label in model.labels:
            if label in per_temperature:
                names.extend(f"S_{label}_{temperature_tag(t)}" for t in temperatures)
            else:
                names.append(f"S_{label}")
        if model.fit_energies:
            names.extend(f"E_{label}" for label in model.labels)
    return names


def model_rates(
    model: ModelSpec,
    values: Mapping[str, float],
    points: Sequence[RatePoint],
    per_temperature: Sequence[str] = (),
) -> np.ndarray:
    """Model rate at every data point for the given parameter values."""
    scale = values["scale"] if "scale" in values else 10.0 ** values["log10_scale"]
    rates = np.zeros(len(points))
    if isinstance(model, QuasiContinuumModel):
        unit = QuasiContinuumParams(scale=1.0, zpl_nm=model.zpl_nm)
        for i, point in enumerate(points):
            rates[i] = qc_rate_per_power(
                point.wavelength_nm, point.temperature_K, model.spectrum, unit
            )
        return scale * rates

    temperatures = np.array([p.temperature_K for p in points])
    for temperature in sorted(set(temperatures.tolist())):
        index = np.flatnonzero(temperatures == temperature)
        modes = model.mode_set(values, temperature, per_temperature)
        rates[index] = rate_per_power_many(
            [points[i].wavelength_nm for i in index], temperature, modes, model.zpl_nm, model.limits
        )
    return scale * rates


class FitProblem(BaseModel):
    data: RateCurve
    model: ModelSpec
    parameters: List[ParameterSpec]
    per_temperature: List[str] = Field(
        default_factory=list, description="Mode labels with one S_k per temperature"
    )
    loss_space: LossSpace = Field(default_factory=lambda: config.fitting.loss_space)

    @model_validator(mode="after")
    def _check_problem(self) -> "FitProblem":
        if len(self.data) == 0:
            raise ValueError("fit data is empty")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        if isinstance(self.model, EffectiveModeModel):
            unknown = set(self.per_temperature) - set(self.model.labels)
            if unknown:
                raise ValueError(f"per-temperature labels {sorted(unknown)} name no mode")
        elif self.per_temperature:
            raise ValueError("per-temperature parameters need an effective-mode model")
        expected = required_parameters(self.model, self.data.temperatures, self.per_temperature)
        missing = [n for n in expected if n not in names]
        extra = [n for n in names if n not in expected]
        if missing or extra:
            raise ValueError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
        if self.loss_space == "log_rate" and any(p.rate_Hz <= 0 for p in self.data):
            raise ValueError("log-rate loss needs strictly positive data rates")
        return self

    @property
    def free_names(self) -> List[str]:
        return [p.name for p in self.parameters if p.vary]

    @classmethod
    def build(
        cls,
        data: RateCurve,
        model: ModelSpec,
        per_temperature: Optional[Sequence[str]] = None,
        overrides: Sequence[ParameterSpec] = (),
        loss_space: Optional[LossSpace] = None,
    ) -> "FitProblem":
        """Problem with default initial values and bounds, then user overrides.

        Without an explicit per_temperature list the lowest-energy mode of a
        multi-mode model gets one S_k per temperature.
        """
        temperatures = data.temperatures
        if per_temperature is None:
            per_temperature = []
            if isinstance(model, EffectiveModeModel) and len(model.labels) > 1 and len(temperatures) > 1:
                lowest = int(np.argmin(model.mode_energies_meV))
                per_temperature = [model.labels[lowest]]
        per_temperature = list(per_temperature)

        specs: Dict[str, ParameterSpec] = {}
        for name in required_parameters(model, temperatures, per_temperature):
            if name == "gamma":
                specs[name] = ParameterSpec(name=name, value=5.0, min=0.5, max=50.0)
            elif name.startswith("S_"):
                specs[name] = ParameterSpec(name=name, value=0.3, min=0.0, max=5.0)
            elif name.startswith("E_"):
                energy = model.mode_energies_meV[model.labels.index(name[2:])]
                specs[name] = ParameterSpec(
                    name=name, value=energy, min=0.5 * energy, max=1.5 * energy
                )
        specs["log10_scale"] = ParameterSpec(name="log10_scale", value=0.0, min=-6.0, max=6.0)

        guess = _initial_log_scale(data, model, {n: s.value for n, s in specs.items()}, per_temperature)
        specs["log10_scale"] = ParameterSpec(
            name="log10_scale", value=guess, min=guess - 6.0, max=guess + 6.0
        )
        for override in overrides:
            if override.name not in specs:
                raise ValueError(f"override for unknown parameter {override.name}")
            specs[override.name] = override
        return cls(
            data=data,
            model=model,
            parameters=list(specs.values()),
            per_temperature=per_temperature,
            loss_space=loss_space or config.fitting.loss_space,
        )


def _initial_log_scale(
    data: RateCurve, model: ModelSpec, values: Dict[str, float], per_temperature: Sequence[str]
) -> float:
    """Median log10 offset between data and the unit-scale model."""
    try:
        unit = model_rates(model, {**values, "scale": 1.0}, data.points, per_temperature)
    except NVCycleError:
        return 0.0
    observed = np.array([p.rate_Hz for p in data])
    usable = (unit > 0) & (observed > 0)
    if not np.any(usable):
        return 0.0
    return float(np.median(np.log10(observed[usable]) - np.log10(unit[usable])))


class FitResult(BaseModel):
    params: Dict[str, float]
    stderr: Dict[str, Optional[float]]
    residuals: List[float]
    fitted_rates: List[float]
    chisqr: float
    converged: bool
    n_evals: int
    diagnostics: Dict[str, Any] = Field(default_factory=dict)


def _lmfit_parameters(problem: FitProblem, start: Optional[Mapping[str, float]] = None) -> Parameters:
    params = Parameters()
    for spec in problem.parameters:
        value = spec.value if start is None else start.get(spec.name, spec.value)
        params.add(spec.name, value=value, min=spec.min, max=spec.max, vary=spec.vary)
    params.add("scale", expr="10**log10_scale")
    return params


def _weights(problem: FitProblem) -> np.ndarray:
    weights = np.ones(len(problem.data))
    for i, point in enumerate(problem.data):
        if point.stderr_Hz is not None and point.stderr_Hz > 0:
            if problem.loss_space == "log_rate":
                weights[i] = point.stderr_Hz / point.rate_Hz
            else:
                weights[i] = point.stderr_Hz
    return weights


def _residual(
    params: Parameters,
    problem: FitProblem,
    penalty: float,
    diagnostics: Dict[str, Any],
) -> np.ndarray:
    observed = np.array([p.rate_Hz for p in problem.data])
    weights = _weights(problem)
    try:
        model = model_rates(
            problem.model, params.valuesdict(), problem.data.points, problem.per_temperature
        )
    except (NVCycleError, ValueError) as e:
        diagnostics["failed_evaluations"] = diagnostics.get("failed_evaluations", 0) + 1
        diagnostics["last_failure"] = str(e)
        return np.full(len(observed), penalty)

    if problem.loss_space == "linear_rate":
        return (model - observed) / weights
    residual = np.full(len(observed), penalty)
    positive = model > 0
    if not np.all(positive):
        diagnostics["penalized_points"] = diagnostics.get("penalized_points", 0) + int(
            np.count_nonzero(~positive)
        )
    residual[positive] = (np.log(model[positive]) - np.log(observed[positive])) / weights[positive]
    return residual


def _simplex_run(
    start: Dict[str, float], problem: FitProblem, settings: FittingSettings
) -> Dict[str, Any]:
    diagnostics: Dict[str, Any] = {}
    out = minimize(
        _residual,
        _lmfit_parameters(problem, start),
        method="nelder",
        args=(problem, settings.zero_rate_penalty, diagnostics),
        max_nfev=settings.max_nfev,
    )
    # an aborted run carries no statistics of its own
    residual = _residual(out.params, problem, settings.zero_rate_penalty, {})
    return {
        "values": {name: float(out.params[name].value) for name in out.params},
        "chisqr": float(np.sum(residual**2)),
        "nfev": int(out.nfev),
        "success": bool(out.success) and not getattr(out, "aborted", False),
        "diagnostics": diagnostics,
    }


def _starting_points(problem: FitProblem, multistart: int, seed: int) -> List[Dict[str, float]]:
    starts = [{p.name: p.value for p in problem.parameters}]
    rng = np.random.default_rng(seed)
    for _ in range(multistart - 1):
        starts.append(
            {
                p.name: float(rng.uniform(p.min, p.max)) if p.vary else p.value
                for p in problem.parameters
            }
        )
    return starts


def fit(
    problem: FitProblem,
    settings: Optional[FittingSettings] = None,
    seed: int = 0,
    workers: int = 1,
) -> FitResult:
    """Minimise the weighted squared residuals of problem.

    Non-convergence is reported through converged=False with the best point
    found; it is never raised.
    """
    settings = settings or config.fitting
    starts = _starting_points(problem, settings.multistart, seed)
    runs = map_points(partial(_simplex_run, problem=problem, settings=settings), starts, workers)
    best = min(runs, key=lambda run: run["chisqr"])
    n_evals = sum(run["nfev"] for run in runs)
    converged = best["success"]
    diagnostics: Dict[str, Any] = {
        "starts": len(runs),
        "start_chisqr": [run["chisqr"] for run in runs],
        **best["diagnostics"],
    }

    final = _lmfit_parameters(problem, best["values"])
    stderr: Dict[str, Optional[float]] = {name: None for name in final}
    if settings.polish and problem.free_names:
        polish_diagnostics: Dict[str, Any] = {}
        polished = minimize(
            _residual,
            final,
            method="least_squares",
            args=(problem, settings.zero_rate_penalty, polish_diagnostics),
            max_nfev=settings.max_nfev,
            ftol=1e-12,
            xtol=1e-12,
            gtol=1e-12,
        )
        n_evals += int(polished.nfev)
        diagnostics["polish_success"] = bool(polished.success)
        if polished.chisqr <= best["chisqr"]:
            final = polished.params
            converged = converged or bool(polished.success)
            stderr = {
                name: (None if final[name].stderr is None else float(final[name].stderr))
                for name in final
            }
            diagnostics.update({f"polish_{k}": v for k, v in polish_diagnostics.items()})

    values = final.valuesdict()
    residual_diagnostics: Dict[str, Any] = {}
    residuals = _residual(final, problem, settings.zero_rate_penalty, residual_diagnostics)
    try:
        rates = model_rates(problem.model, values, problem.data.points, problem.per_temperature)
    except NVCycleError:
        rates = np.full(len(problem.data), np.nan)

    if converged:
        logger.info(f"Fit converged after {n_evals} evaluations, chi^2 = {float(np.sum(residuals**2)):.6g}")
    else:
        logger.warning(f"Fit did not converge within {settings.max_nfev} evaluations per start")
    return FitResult(
        params={name: float(v) for name, v in values.items()},
        stderr=stderr,
        residuals=residuals.tolist(),
        fitted_rates=rates.tolist(),
        chisqr=float(np.sum(residuals**2)),
        converged=converged,
        n_evals=n_evals,
        diagnostics=diagnostics,
    )


def synthetic_rate_curve(
    model: ModelSpec,
    values: Mapping[str, float],
    wavelengths_nm: Sequence[float],
    temperatures_K: Sequence[float],
    noise: float = 0.0,
    seed: int = 0,
    per_temperature: Sequence[str] = (),
) -> RateCurve:
    """Model rates on a grid with multiplicative log-normal noise of relative size noise."""
    points = [
        RatePoint(wavelength_nm=w, temperature_K=t, rate_Hz=0.0)
        for t in temperatures_K
        for w in wavelengths_nm
    ]
    rates = model_rates(model, values, points, per_temperature)
    if noise > 0:
        rates = rates * np.exp(noise * np.random.default_rng(seed).standard_normal(len(rates)))
    return RateCurve(
        points=[
            p.model_copy(
                update={"rate_Hz": float(r), "stderr_Hz": float(noise * r) if noise > 0 else None}
            )
            for p, r in zip(points, rates)
        ]
    )


class QuasiContinuumModelConfig(BaseModel):
    kind: Literal["quasi_continuum"]
    spectrum_path: str
    spectrum_format: SpectrumFormat = "detuning"
    zpl_nm: Optional[float] = None

    model_config = {"extra": "forbid"}


class EffectiveModeModelConfig(BaseModel):
    kind: Literal["effective_mode"]
    mode_energies_meV: List[PositiveEnergyMeV]
    labels: List[str] = Field(default_factory=list)
    zpl_nm: Optional[float] = None
    max_quanta_per_mode: Optional[int] = None
    fit_energies: bool = False

    model_config = {"extra": "forbid"}


class FitConfig(BaseModel):
    """Fit config JSON ("schema": "fit/v1")"""

    schema_: Literal["fit/v1"] = Field("fit/v1", alias="schema")
    model: Annotated[
        Union[QuasiContinuumModelConfig, EffectiveModeModelConfig], Field(discriminator="kind")
    ]
    parameters: List[ParameterSpec] = Field(default_factory=list)
    per_temperature: Optional[List[str]] = None
    loss_space: Optional[LossSpace] = None
    max_nfev: Optional[int] = Field(None, ge=10)
    multistart: Optional[int] = Field(None, ge=1)
    polish: Optional[bool] = None

    model_config = {"extra": "forbid", "populate_by_name": True}

    @field_validator("parameters")
    @classmethod
    def _unique(cls, parameters: List[ParameterSpec]) -> List[ParameterSpec]:
        names = [p.name for p in parameters]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter overrides")
        return parameters

    def settings(self) -> FittingSettings:
        updates = {
            k: v
            for k, v in {
                "loss_space": self.loss_space,
                "max_nfev": self.max_nfev,
                "multistart": self.multistart,
                "polish": self.polish,
            }.items()
            if v is not None
        }
        return config.fitting.model_copy(update=updates)

    def build_model(self, base_dir: Path) -> ModelSpec:
        spec = self.model
        zpl = {"zpl_nm": spec.zpl_nm} if spec.zpl_nm is not None else {}
        if isinstance(spec, QuasiContinuumModelConfig):
            path = Path(spec.spectrum_path)
            if not path.is_absolute():
                path = base_dir / path
            spectrum = load_spectrum(path, spec.spectrum_format, zpl_nm=spec.zpl_nm)
            return QuasiContinuumModel(spectrum=spectrum, **zpl)
        quanta = (
            {"max_quanta_per_mode": spec.max_quanta_per_mode}
            if spec.max_quanta_per_mode is not None
            else {}
        )
        return EffectiveModeModel(
            mode_energies_meV=spec.mode_energies_meV,
            labels=spec.labels,
            fit_energies=spec.fit_energies,
            **zpl,
            **quanta,
        )

    def build_problem(self, data: RateCurve, base_dir: Path) -> FitProblem:
        return FitProblem.build(
            data,
            self.build_model(base_dir),
            per_temperature=self.per_temperature,
            overrides=self.parameters,
            loss_space=self.loss_space,
        )


def load_fit_config(path: Union[str, Path]) -> FitConfig:
    path = Path(path)
    try:
        return FitConfig.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError) as e:
        raise CommandError(f"cannot read fit config {path}: {e}") from None
    except ValidationError as e:
        raise CommandError(f"invalid fit config {path}: {e}") from None
