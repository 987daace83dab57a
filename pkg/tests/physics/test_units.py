import math

import pytest

from app.exceptions import DomainError
from app.physics.units import (
    CONSTANTS,
    detuning_below_zpl,
    energy_to_wavelength,
    photon_flux,
    thermal_energy,
    wavelength_to_energy,
)


def test_constants_match_codata():
    assert CONSTANTS.hc_meV_nm == pytest.approx(1239841.98, rel=1e-8)
    assert CONSTANTS.kB_meV_per_K == pytest.approx(0.0861733, rel=1e-6)
    assert CONSTANTS.huang_rhys_factor == pytest.approx(0.1196, rel=2e-3)
    assert CONSTANTS.lattice_energy_factor == pytest.approx(64.65, rel=2e-3)


@pytest.mark.parametrize(
    "wavelength, energy",
    [(575.0, 2156.25), (580.0, 2137.66)],
)
def test_wavelength_to_energy(wavelength, energy):
    assert wavelength_to_energy(wavelength) == pytest.approx(energy, abs=0.01)


@pytest.mark.parametrize("wavelength", [300.0, 575.0, 599.9, 1064.0])
def test_energy_wavelength_round_trip(wavelength):
    back = energy_to_wavelength(wavelength_to_energy(wavelength))
    assert back == pytest.approx(wavelength, rel=1e-12)


def test_wavelength_to_energy_strictly_decreasing():
    energies = [wavelength_to_energy(580.0 + 0.5 * i) for i in range(41)]
    assert all(a > b for a, b in zip(energies, energies[1:]))


@pytest.mark.parametrize("bad", [0.0, -5.0, math.inf])
def test_non_positive_wavelength_rejected(bad):
    with pytest.raises(DomainError):
        wavelength_to_energy(bad)


@pytest.mark.parametrize(
    "wavelength, expected",
    [(580.0, 18.59), (575.0, 0.0), (600.0, 89.85)],
)
def test_detuning_below_zpl(wavelength, expected):
    assert detuning_below_zpl(wavelength, 575.0) == pytest.approx(expected, abs=0.01)


def test_detuning_is_zero_only_at_the_zpl():
    assert detuning_below_zpl(575.0, 575.0) == 0.0
    assert detuning_below_zpl(575.001, 575.0) > 0.0


def test_detuning_uses_configured_zpl():
    assert detuning_below_zpl(575.0) == 0.0


def test_super_resonant_excitation_rejected():
    with pytest.raises(DomainError, match="super-resonant"):
        detuning_below_zpl(570.0, 575.0)


def test_thermal_energy():
    assert thermal_energy(300.0) == pytest.approx(25.852, abs=1e-3)
    assert thermal_energy(0.0) == 0.0
    with pytest.raises(DomainError):
        thermal_energy(-1.0)


def test_photon_flux():
    joules_per_photon = wavelength_to_energy(590.0) * CONSTANTS.mev_joule
    assert photon_flux(2.0, 590.0) == pytest.approx(2.0 / joules_per_photon, rel=1e-12)
    with pytest.raises(DomainError):
        photon_flux(-1.0, 590.0)
