"""Physical constants and energy/wavelength conversions.

Internal conventions: energies in meV, wavelengths in nm, temperatures in
kelvin, rates in Hz and times in seconds.
"""

import math
from typing import Annotated

from pydantic import BaseModel, ConfigDict, Field
from scipy import constants as _codata

from app.config import config
from app.exceptions import DomainError


EnergyMeV = Annotated[float, Field(allow_inf_nan=False)]
PositiveEnergyMeV = Annotated[float, Field(gt=0, allow_inf_nan=False)]
WavelengthNm = Annotated[float, Field(gt=0, allow_inf_nan=False)]
TemperatureK = Annotated[float, Field(ge=0, allow_inf_nan=False)]


class PhysicalConstants(BaseModel):
    """CODATA values expressed in the package's unit system."""

    hc_meV_nm: float = Field(
        _codata.h * _codata.c / _codata.e * 1e3 * 1e9, description="h*c (meV nm)"
    )
    kB_meV_per_K: float = Field(
        _codata.k / _codata.e * 1e3, description="Boltzmann constant (meV/K)"
    )
    hbar_meV_s: float = Field(_codata.hbar / _codata.e * 1e3, description="hbar (meV s)")
    mev_joule: float = Field(_codata.e * 1e-3, description="1 meV in joule")
    amu_kg: float = Field(_codata.atomic_mass, description="1 amu in kg")

    model_config = ConfigDict(frozen=True)

    @property
    def huang_rhys_factor(self) -> float:
        """S per (meV * amu * A^2): S = factor * hbar*omega * dQ^2."""
        hbar_j = _codata.hbar
        return self.mev_joule * self.amu_kg * 1e-20 / (2.0 * hbar_j**2)

    @property
    def lattice_energy_factor(self) -> float:
        """meV per sqrt(eV / A^2 / amu) of angular frequency."""
        omega_si = math.sqrt(_codata.e / (1e-20 * self.amu_kg))
        return self.hbar_meV_s * omega_si


CONSTANTS = PhysicalConstants()


def wavelength_to_energy(wavelength_nm: float) -> float:
    """Photon energy (meV) of a vacuum wavelength (nm)."""
    if not wavelength_nm > 0 or not math.isfinite(wavelength_nm):
        raise DomainError(f"wavelength must be positive, got {wavelength_nm} nm")
    return CONSTANTS.hc_meV_nm / wavelength_nm


def energy_to_wavelength(energy_meV: float) -> float:
    if not energy_meV > 0 or not math.isfinite(energy_meV):
        raise DomainError(f"photon energy must be positive, got {energy_meV} meV")
    return CONSTANTS.hc_meV_nm / energy_meV


def detuning_below_zpl(wavelength_nm: float, zpl_nm: float | None = None) -> float:
    """E_ZPL - E_lambda for sub-resonant excitation, in meV."""
    zpl_nm = config.units.nv0_zpl_nm if zpl_nm is None else zpl_nm
    if wavelength_nm < zpl_nm:
        raise DomainError(
            f"super-resonant excitation out of scope: {wavelength_nm} nm < ZPL {zpl_nm} nm"
        )
    if wavelength_nm == zpl_nm:
        return 0.0
    return wavelength_to_energy(zpl_nm) - wavelength_to_energy(wavelength_nm)


def thermal_energy(temperature_K: float) -> float:
    if temperature_K < 0:
        raise DomainError(f"temperature must be non-negative, got {temperature_K} K")
    return CONSTANTS.kB_meV_per_K * temperature_K


def photon_flux(power_density: float, wavelength_nm: float) -> float:
    """Photons per area per second for a power density (W per area)."""
    if power_density < 0:
        raise DomainError(f"power density must be non-negative, got {power_density}")
    return power_density / (wavelength_to_energy(wavelength_nm) * CONSTANTS.mev_joule)
