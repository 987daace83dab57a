import json
import math

import numpy as np
import pytest

from app.config import FittingSettings
from app.exceptions import CommandError
from app.fitting.fit import (
    EffectiveModeModel,
    FitProblem,
    ParameterSpec,
    QuasiContinuumModel,
    energy_label,
    fit,
    load_fit_config,
    model_rates,
    required_parameters,
    synthetic_rate_curve,
    temperature_tag,
)
from app.fitting.report import FitReport, fit_report
from app.physics.quasi_continuum import EmissionSpectrum
from app.schema import RateCurve, RatePoint


WAVELENGTHS = [580.0 + 2.0 * i for i in range(11)]
TEMPERATURES = [100.0, 200.0, 300.0]
TRUE_EM = {"log10_scale": 0.0, "gamma": 5.0, "S_43meV": 0.3, "S_9meV": 0.5}


def settings(**updates):
    base = FittingSettings(max_nfev=2000, multistart=1, polish=True, loss_space="log_rate")
    return base.model_copy(update=updates)


@pytest.fixture(scope="module")
def sideband():
    energies = np.arange(0.0, 151.0, 1.0)
    densities = np.exp(-((energies - 60.0) ** 2) / (2.0 * 25.0**2))
    return EmissionSpectrum(samples=list(zip(energies.tolist(), densities.tolist())))


@pytest.fixture(scope="module")
def qc_model(sideband):
    return QuasiContinuumModel(spectrum=sideband)


@pytest.fixture(scope="module")
def em_model():
    return EffectiveModeModel(mode_energies_meV=[43.0, 9.0], max_quanta_per_mode=10)


@pytest.fixture(scope="module")
def em_data(em_model):
    return synthetic_rate_curve(em_model, TRUE_EM, WAVELENGTHS, TEMPERATURES, noise=0.05, seed=1)


@pytest.fixture(scope="module")
def em_fit(em_model, em_data):
    problem = FitProblem.build(em_data, em_model, per_temperature=[])
    return problem, fit(problem, settings())


def test_tags_and_labels():
    assert temperature_tag(300.0) == "T300"
    assert temperature_tag(77.5) == "T77p5"
    assert energy_label(43.0) == "43meV"
    assert energy_label(9.5) == "9p5meV"


def test_required_parameters(em_model, qc_model):
    assert required_parameters(qc_model, TEMPERATURES) == ["log10_scale"]
    assert required_parameters(em_model, [100.0, 300.0], per_temperature=["9meV"]) == [
        "log10_scale",
        "gamma",
        "S_43meV",
        "S_9meV_T100",
        "S_9meV_T300",
    ]


def test_default_problem_gives_lowest_mode_one_factor_per_temperature(em_model, em_data):
    problem = FitProblem.build(em_data, em_model)
    assert problem.per_temperature == ["9meV"]
    assert {"S_9meV_T100", "S_9meV_T200", "S_9meV_T300", "S_43meV"} <= set(problem.free_names)


def test_effective_mode_round_trip(em_fit):
    _, result = em_fit
    assert result.converged
    assert result.params["S_43meV"] == pytest.approx(0.3, rel=0.1)
    assert result.params["S_9meV"] == pytest.approx(0.5, rel=0.1)
    assert result.params["gamma"] == pytest.approx(5.0, rel=0.2)
    assert result.params["scale"] == pytest.approx(10.0 ** result.params["log10_scale"])
    assert len(result.residuals) == len(result.fitted_rates) == 33


def test_single_mode_fits_worse(em_fit, em_data):
    _, two_mode = em_fit
    single = EffectiveModeModel(mode_energies_meV=[43.0], max_quanta_per_mode=10)
    result = fit(FitProblem.build(em_data, single), settings())
    assert result.chisqr > two_mode.chisqr


def test_quasi_continuum_scale_is_exact(qc_model):
    data = synthetic_rate_curve(qc_model, {"log10_scale": 2.5}, WAVELENGTHS, TEMPERATURES)
    result = fit(FitProblem.build(data, qc_model), settings())
    assert result.converged
    assert result.params["scale"] == pytest.approx(10.0**2.5, rel=1e-6)
    assert max(abs(r) for r in result.residuals) < 1e-6


def test_scaling_the_data_shifts_only_the_scale(qc_model):
    data = synthetic_rate_curve(qc_model, {"log10_scale": 1.0}, WAVELENGTHS, TEMPERATURES)
    scaled = RateCurve(points=[p.model_copy(update={"rate_Hz": 7.0 * p.rate_Hz}) for p in data])
    base = fit(FitProblem.build(data, qc_model), settings())
    shifted = fit(FitProblem.build(scaled, qc_model), settings())
    assert shifted.params["log10_scale"] - base.params["log10_scale"] == pytest.approx(
        math.log10(7.0), abs=1e-6
    )


def test_fit_is_deterministic(qc_model):
    data = synthetic_rate_curve(
        qc_model, {"log10_scale": 0.5}, WAVELENGTHS, TEMPERATURES, noise=0.05, seed=3
    )
    problem = FitProblem.build(data, qc_model)
    first = fit(problem, settings(multistart=3), seed=5)
    second = fit(problem, settings(multistart=3), seed=5)
    assert first.params == second.params
    assert first.chisqr == second.chisqr
    assert first.diagnostics["starts"] == 3


def test_model_rates_scale_linearly(qc_model):
    points = [RatePoint(wavelength_nm=590.0, temperature_K=300.0, rate_Hz=1.0)]
    unit = model_rates(qc_model, {"log10_scale": 0.0}, points)
    assert model_rates(qc_model, {"scale": 4.0}, points) == pytest.approx(4.0 * unit)


@pytest.fixture(scope="module")
def aborted():
    model = EffectiveModeModel(mode_energies_meV=[43.0], max_quanta_per_mode=8)
    data = synthetic_rate_curve(
        model,
        {"log10_scale": 0.0, "gamma": 5.0, "S_43meV": 0.4},
        [582.0, 590.0, 598.0],
        [150.0, 300.0],
        noise=0.05,
        seed=2,
    )
    problem = FitProblem.build(data, model)
    return problem, fit(problem, settings(max_nfev=10, polish=False))


def test_non_convergence_is_flagged_not_raised(aborted):
    problem, result = aborted
    assert not result.converged
    report = fit_report(result, problem)
    assert report.flagged
    assert report.diagnostics["message"]
    assert all(math.isfinite(p.value) for p in report.parameters)


def test_report_sections(aborted, tmp_path):
    problem, result = aborted
    report = fit_report(result, problem, grid_points=51)
    assert report.rate_model == "effective_mode"
    assert {p.name for p in report.parameters} == {"log10_scale", "gamma", "S_43meV", "scale"}
    assert [(r.wavelength_nm, r.temperature_K) for r in report.residuals] == [
        p.key for p in problem.data
    ]
    assert len(report.coupling_spectrum) == 51 * 2

    payload = json.loads(report.to_json())
    assert payload["schema"] == "fit_report/v1"
    assert FitReport.model_validate_json(report.to_json()) == report

    path = report.write_coupling_csv(tmp_path / "coupling.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# schema=coupling/v1"
    assert lines[2] == "temperature_K,energy_meV,coupling"
    assert len(lines) == 3 + 51 * 2


def test_quasi_continuum_report_has_no_coupling(qc_model, tmp_path):
    data = synthetic_rate_curve(qc_model, {"log10_scale": 0.0}, WAVELENGTHS[:3], [300.0])
    problem = FitProblem.build(data, qc_model)
    report = fit_report(fit(problem, settings()), problem)
    assert report.coupling_spectrum == []
    assert not report.flagged
    written = report.write(tmp_path / "report.json")
    assert json.loads(written.read_text(encoding="utf-8"))["rate_model"] == "quasi_continuum"


def one_point(rate=1.0):
    return RateCurve(points=[RatePoint(wavelength_nm=590.0, temperature_K=300.0, rate_Hz=rate)])


def test_problem_validation(qc_model, em_model):
    scale = ParameterSpec(name="log10_scale", value=0.0, min=-3.0, max=3.0)
    with pytest.raises(ValueError, match="empty"):
        FitProblem(data=RateCurve(), model=qc_model, parameters=[scale])
    with pytest.raises(ValueError, match="mismatch"):
        FitProblem(data=one_point(), model=em_model, parameters=[scale])
    with pytest.raises(ValueError, match="effective-mode"):
        FitProblem(data=one_point(), model=qc_model, parameters=[scale], per_temperature=["9meV"])
    with pytest.raises(ValueError, match="name no mode"):
        FitProblem.build(one_point(), em_model, per_temperature=["12meV"])
    with pytest.raises(ValueError, match="strictly positive"):
        FitProblem(data=one_point(0.0), model=qc_model, parameters=[scale])
    gamma = ParameterSpec(name="gamma", value=1.0, min=0.1, max=2.0)
    with pytest.raises(ValueError, match="unknown parameter"):
        FitProblem.build(one_point(), qc_model, overrides=[gamma])
    assert FitProblem(
        data=one_point(0.0), model=qc_model, parameters=[scale], loss_space="linear_rate"
    ).free_names == ["log10_scale"]


def test_parameter_spec_validation():
    with pytest.raises(ValueError, match="finite bounds"):
        ParameterSpec(name="gamma", value=1.0)
    with pytest.raises(ValueError, match="outside its bounds"):
        ParameterSpec(name="gamma", value=10.0, min=0.0, max=5.0)
    with pytest.raises(ValueError, match="identifier"):
        ParameterSpec(name="9 lives", value=1.0, min=0.0, max=5.0)
    assert not ParameterSpec(name="gamma", value=1.0, vary=False).vary


def test_fixed_parameter_is_held(em_data, em_model):
    fixed = ParameterSpec(name="gamma", value=5.0, vary=False)
    problem = FitProblem.build(em_data, em_model, per_temperature=[], overrides=[fixed])
    result = fit(problem, settings(max_nfev=200, polish=False))
    assert result.params["gamma"] == 5.0


def test_load_fit_config(tmp_path, em_data):
    path = tmp_path / "fit.json"
    path.write_text(
        json.dumps(
            {
                "schema": "fit/v1",
                "model": {
                    "kind": "effective_mode",
                    "mode_energies_meV": [43.0, 9.0],
                    "labels": ["optical", "acoustic"],
                    "max_quanta_per_mode": 8,
                },
                "parameters": [{"name": "gamma", "value": 4.0, "min": 1.0, "max": 20.0}],
                "per_temperature": [],
                "max_nfev": 500,
            }
        ),
        encoding="utf-8",
    )
    cfg = load_fit_config(path)
    assert cfg.settings().max_nfev == 500
    problem = cfg.build_problem(em_data, tmp_path)
    assert problem.model.max_quanta_per_mode == 8
    assert set(problem.free_names) == {"log10_scale", "gamma", "S_optical", "S_acoustic"}
    gamma = next(p for p in problem.parameters if p.name == "gamma")
    assert (gamma.value, gamma.min, gamma.max) == (4.0, 1.0, 20.0)


def test_quasi_continuum_config_resolves_relative_spectrum(tmp_path):
    (tmp_path / "sideband.csv").write_text(
        "epsilon_meV,density\n0,0.1\n50,1.0\n100,0.2\n", encoding="utf-8"
    )
    path = tmp_path / "fit.json"
    path.write_text(
        json.dumps({"model": {"kind": "quasi_continuum", "spectrum_path": "sideband.csv"}}),
        encoding="utf-8",
    )
    model = load_fit_config(path).build_model(tmp_path)
    assert isinstance(model, QuasiContinuumModel)
    assert model.spectrum.energies.tolist() == [0.0, 50.0, 100.0]


@pytest.mark.parametrize(
    "payload",
    [
        "{not json",
        json.dumps({"model": {"kind": "effective_mode", "mode_energies_meV": [43.0]}, "colour": 1}),
        json.dumps({"model": {"kind": "lattice"}}),
        json.dumps({"schema": "fit/v2", "model": {"kind": "effective_mode", "mode_energies_meV": [43.0]}}),
    ],
)
def test_invalid_fit_configs(tmp_path, payload):
    path = tmp_path / "fit.json"
    path.write_text(payload, encoding="utf-8")
    with pytest.raises(CommandError):
        load_fit_config(path)


def test_missing_fit_config(tmp_path):
    with pytest.raises(CommandError):
        load_fit_config(tmp_path / "absent.json")
