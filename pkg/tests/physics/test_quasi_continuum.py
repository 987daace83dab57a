import math

import numpy as np
import pytest

from app.exceptions import DomainError, FormatError
from app.physics.quasi_continuum import (
    EmissionSpectrum,
    QuasiContinuumParams,
    load_spectrum,
    qc_rate_curve,
    qc_rate_per_power,
)
from app.physics.units import CONSTANTS, energy_to_wavelength, wavelength_to_energy


ZPL_NM = 575.0
E_ZPL = wavelength_to_energy(ZPL_NM)


def at_detuning(detuning_meV):
    return energy_to_wavelength(E_ZPL - detuning_meV)


def spike(weight, center=30.0, half_width=0.5):
    return EmissionSpectrum(
        samples=[
            (0.0, 0.0),
            (center - half_width, 0.0),
            (center, weight / half_width),
            (center + half_width, 0.0),
            (100.0, 0.0),
        ]
    )


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_detuning_spectrum(tmp_path):
    path = write_csv(tmp_path / "s.csv", "# NV0 sideband\nepsilon_meV,density\n0,0.1\n10,0.5\n20,0.2\n")
    spectrum = load_spectrum(path)
    assert len(spectrum.samples) == 3
    assert spectrum.energies.tolist() == [0.0, 10.0, 20.0]


def test_load_photon_energy_spectrum(tmp_path):
    path = write_csv(
        tmp_path / "s.csv",
        f"photon_energy_meV,density\n{E_ZPL - 20.0},0.2\n{E_ZPL - 10.0},0.5\n{E_ZPL},0.1\n",
    )
    spectrum = load_spectrum(path, "photon_energy", zpl_nm=ZPL_NM)
    assert spectrum.energies == pytest.approx([0.0, 10.0, 20.0], abs=1e-9)
    assert spectrum.densities.tolist() == [0.1, 0.5, 0.2]


@pytest.mark.parametrize(
    "body, line, message",
    [
        ("epsilon_meV,density\n0,0.1\n10,-0.5\n", 3, "negative density"),
        ("epsilon_meV,density\n0,0.1\n10,0.5\n10,0.2\n", 4, "non-increasing abscissa"),
        ("epsilon_meV,density\n0,0.1\n10,abc\n", 3, "non-numeric"),
        ("epsilon_meV,density\n0,0.1,7\n", 2, "2 columns"),
        ("energy,density\n0,0.1\n", 1, "expected header"),
    ],
)
def test_load_spectrum_rejects_bad_files(tmp_path, body, line, message):
    path = write_csv(tmp_path / "bad.csv", body)
    with pytest.raises(FormatError, match=message) as excinfo:
        load_spectrum(path)
    assert excinfo.value.line == line


def test_load_spectrum_missing_file(tmp_path):
    with pytest.raises(FormatError):
        load_spectrum(tmp_path / "missing.csv")


def test_load_spectrum_line_numbers_skip_comments_and_blanks(tmp_path):
    path = write_csv(
        tmp_path / "s.csv",
        "# measured at 300 K\n\nepsilon_meV, density\n0, 0.1  # edge\n\n# gap\n10,0.5\n20,-0.2\n",
    )
    with pytest.raises(FormatError, match="negative density") as excinfo:
        load_spectrum(path)
    assert excinfo.value.line == 8

    path = write_csv(tmp_path / "ok.csv", "# measured\nepsilon_meV,density\n\n0,0.1 # edge\n10,0.5\n")
    assert load_spectrum(path).densities.tolist() == [0.1, 0.5]


def test_load_spectrum_needs_samples(tmp_path):
    with pytest.raises(FormatError):
        load_spectrum(write_csv(tmp_path / "header.csv", "epsilon_meV,density\n"))
    with pytest.raises(FormatError, match="no header"):
        load_spectrum(write_csv(tmp_path / "empty.csv", "# nothing here\n"))


def test_spectrum_model_validation():
    with pytest.raises(ValueError, match="non-increasing abscissa"):
        EmissionSpectrum(samples=[(0.0, 1.0), (0.0, 2.0)])
    with pytest.raises(ValueError, match="negative density"):
        EmissionSpectrum(samples=[(0.0, 1.0), (1.0, -2.0)])


def test_spike_closed_form():
    weight = 0.8
    params = QuasiContinuumParams(scale=2.0, zpl_nm=ZPL_NM)
    value = qc_rate_per_power(at_detuning(20.0), 300.0, spike(weight), params)
    kT = CONSTANTS.kB_meV_per_K * 300.0
    assert value == pytest.approx(2.0 * weight * math.exp(-30.0 / kT), rel=1e-10)
    assert value / (2.0 * weight) == pytest.approx(0.3133, abs=1e-4)


def test_spike_outside_window_gives_zero():
    assert qc_rate_per_power(at_detuning(35.0), 300.0, spike(0.8)) == 0.0


def test_spectrum_below_detuning_threshold_gives_zero():
    spectrum = EmissionSpectrum(samples=[(0.0, 1.0), (5.0, 1.0)])
    assert qc_rate_per_power(at_detuning(10.0), 300.0, spectrum) == 0.0


def test_uniform_density_high_temperature_limit():
    spectrum = EmissionSpectrum(samples=[(0.0, 0.25), (50.0, 0.25), (100.0, 0.25)])
    value = qc_rate_per_power(ZPL_NM, 1e9, spectrum, QuasiContinuumParams(scale=3.0, zpl_nm=ZPL_NM))
    assert value == pytest.approx(3.0 * 25.0, rel=1e-5)


def test_zero_temperature_and_domain_errors():
    spectrum = spike(1.0)
    assert qc_rate_per_power(at_detuning(10.0), 0.0, spectrum) == 0.0
    with pytest.raises(DomainError):
        qc_rate_per_power(570.0, 300.0, spectrum)
    with pytest.raises(DomainError):
        qc_rate_per_power(590.0, -1.0, spectrum)


@pytest.fixture(scope="module")
def random_spectra():
    rng = np.random.default_rng(20240601)
    grid = np.arange(0.0, 201.0, 1.0)
    return [
        EmissionSpectrum(samples=list(zip(grid.tolist(), rng.uniform(0.01, 1.0, grid.size).tolist())))
        for _ in range(100)
    ]


def test_window_and_temperature_monotonicity(random_spectra):
    wavelengths = [580.0 + 2.0 * i for i in range(11)]
    temperatures = [100.0, 200.0, 300.0]
    for spectrum in random_spectra:
        curve = qc_rate_curve(wavelengths, temperatures, spectrum)
        by_temperature = [[p.rate_Hz for p in curve.at_temperature(t)] for t in temperatures]
        for rates in by_temperature:
            assert all(a > b for a, b in zip(rates, rates[1:]))
        for cold, warm in zip(by_temperature, by_temperature[1:]):
            assert all(c < w for c, w in zip(cold, warm))


def test_rate_is_linear_in_the_spectrum(random_spectra):
    a, b = random_spectra[0], random_spectra[1]
    combined = a.combine(b, alpha=2.0, beta=0.5)
    wavelength = at_detuning(40.0)
    expected = 2.0 * qc_rate_per_power(wavelength, 250.0, a) + 0.5 * qc_rate_per_power(
        wavelength, 250.0, b
    )
    assert qc_rate_per_power(wavelength, 250.0, combined) == pytest.approx(expected, rel=1e-12)
    assert qc_rate_per_power(wavelength, 250.0, a.scaled(3.0)) == pytest.approx(
        3.0 * qc_rate_per_power(wavelength, 250.0, a), rel=1e-12
    )


def test_resample_keeps_end_points():
    spectrum = EmissionSpectrum(samples=[(0.0, 0.0), (10.0, 1.0), (25.0, 0.5)])
    resampled = spectrum.resample(2.0)
    assert resampled.energies[0] == 0.0
    assert resampled.energies[-1] == 25.0
    assert np.interp(11.0, resampled.energies, resampled.densities) == pytest.approx(
        1.0 - 0.5 / 15.0, rel=1e-12
    )
    with pytest.raises(DomainError):
        spectrum.resample(0.0)


@pytest.mark.parametrize("temperature", [150.0, 300.0])
@pytest.mark.parametrize("detuning", [10.0, 40.0, 80.0])
def test_halving_the_resampling_step_converges(detuning, temperature):
    grid = np.linspace(0.0, 150.0, 3001)
    smooth = EmissionSpectrum(
        samples=list(zip(grid.tolist(), np.exp(-((grid - 60.0) ** 2) / 800.0).tolist()))
    )
    wavelength = at_detuning(detuning)
    coarse = qc_rate_per_power(wavelength, temperature, smooth.resample(0.1))
    fine = qc_rate_per_power(wavelength, temperature, smooth.resample(0.05))
    assert fine > 0
    assert abs(coarse - fine) / fine < 1e-4


def test_rate_curve_cardinality(random_spectra):
    curve = qc_rate_curve([580.0 + i for i in range(21)], [100.0, 200.0, 300.0], random_spectra[0])
    assert len(curve) == 63
    assert len(qc_rate_curve([], [300.0], random_spectra[0])) == 0
