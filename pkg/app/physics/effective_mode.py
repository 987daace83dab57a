"""Effective-mode anti-Stokes transition rate.

The power-normalised rate sums, over initial occupations n_g and final
occupations n_e of a few Lorentzian-broadened modes, the Boltzmann weight of
n_g, the Franck-Condon products and the resonance lineshape. The lineshape is
truncated at the resonance window: terms outside it are exactly zero.

Enumeration visits initial states in increasing energy and stops at the
Boltzmann cutoff; for each initial state only the band of final states whose
mismatch can fall inside the window is touched.
"""

import itertools
import math
from functools import lru_cache, partial
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.config import config
from app.exceptions import CapacityError, DomainError
from app.logger import logger
from app.parallel import map_points
from app.physics.franck_condon import fc_overlap_sq, fc_table
from app.physics.quasi_continuum import EmissionSpectrum
from app.physics.units import CONSTANTS, detuning_below_zpl, wavelength_to_energy
from app.schema import ModeSet, RateCurve, RatePoint


class EnumerationLimits(BaseModel):
    """Truncation of the infinite occupation sums"""

    max_quanta_per_mode: int = Field(
        default_factory=lambda: config.enumeration.max_quanta_per_mode, ge=0
    )
    boltzmann_cutoff: float = Field(
        default_factory=lambda: config.enumeration.boltzmann_cutoff, gt=0
    )
    lorentzian_window_halfwidths: float = Field(
        default_factory=lambda: config.enumeration.lorentzian_window_halfwidths, gt=0
    )

    model_config = ConfigDict(frozen=True)

    def window_meV(self, fwhm_meV: float) -> float:
        return self.lorentzian_window_halfwidths * fwhm_meV / 2.0


class OccupationVector(BaseModel):
    quanta: List[int]

    def as_tuple(self) -> Tuple[int, ...]:
        return tuple(self.quanta)


def boltzmann_weight(
    n_g: Sequence[int] | OccupationVector, modes: ModeSet, temperature_K: float
) -> float:
    """Unnormalised occupation exp(-sum_k n_k hbar w_k / kT)."""
    quanta = n_g.quanta if isinstance(n_g, OccupationVector) else list(n_g)
    if len(quanta) != len(modes.modes):
        raise DomainError("occupation vector length differs from mode count")
    if temperature_K < 0:
        raise DomainError(f"temperature must be non-negative, got {temperature_K} K")
    energy = sum(n * w for n, w in zip(quanta, modes.energies))
    if temperature_K == 0:
        return 1.0 if energy == 0 else 0.0
    return math.exp(-energy / (CONSTANTS.kB_meV_per_K * temperature_K))


def lorentzian(energy_meV, fwhm_meV: float):
    """Peak-normalised Lorentzian 1 / (1 + (E / (Gamma/2))^2)."""
    if not fwhm_meV > 0:
        raise DomainError(f"Lorentzian FWHM must be positive, got {fwhm_meV} meV")
    x = np.asarray(energy_meV, dtype=float) / (0.5 * fwhm_meV)
    value = 1.0 / (1.0 + x * x)
    return float(value) if value.ndim == 0 else value


def _occupation_table(n_modes: int, cap: int) -> np.ndarray:
    grids = np.indices((cap + 1,) * n_modes).reshape(n_modes, -1)
    return grids.T.copy()


def _check_capacity(modes: ModeSet, limits: EnumerationLimits) -> None:
    n_states = (limits.max_quanta_per_mode + 1) ** len(modes.modes)
    if n_states > config.enumeration.max_states:
        largest = int(config.enumeration.max_states ** (1.0 / len(modes.modes))) - 1
        raise CapacityError(
            f"{n_states} occupation vectors exceed the table limit "
            f"{config.enumeration.max_states}",
            suggestion=f"use max_quanta_per_mode <= {largest} or fewer modes",
        )
    cap = config.franck_condon.max_total_quanta
    if 2 * limits.max_quanta_per_mode > cap:
        raise CapacityError(
            f"max_quanta_per_mode={limits.max_quanta_per_mode} exceeds the overlap cap",
            suggestion=f"use max_quanta_per_mode <= {cap // 2}",
        )


@lru_cache(maxsize=1024)
def _warn_truncation(energy_meV: float, temperature_K: float, cap: int, cutoff: float) -> None:
    # cached so that repeated evaluations (fits, grids) warn once
    edge = math.exp(-cap * energy_meV / (CONSTANTS.kB_meV_per_K * temperature_K))
    if edge >= cutoff:
        logger.warning(
            f"Quanta cap {cap} truncates the thermal sum of the {energy_meV:g} meV mode at "
            f"{temperature_K:g} K (edge weight {edge:.2e}); raise max_quanta_per_mode"
        )


def _warn_if_truncated(modes: ModeSet, temperature_K: float, limits: EnumerationLimits) -> None:
    if temperature_K == 0:
        return
    for mode in modes.modes:
        _warn_truncation(
            mode.energy_meV, temperature_K, limits.max_quanta_per_mode, limits.boltzmann_cutoff
        )


def _rates_at_temperature(
    temperature_K: float,
    detunings: np.ndarray,
    modes: ModeSet,
    limits: EnumerationLimits,
) -> np.ndarray:
    """Pruned evaluation for many detunings at one temperature (without the scale)."""
    if temperature_K < 0:
        raise DomainError(f"temperature must be non-negative, got {temperature_K} K")
    _check_capacity(modes, limits)
    _warn_if_truncated(modes, temperature_K, limits)

    cap = limits.max_quanta_per_mode
    energies = np.asarray(modes.energies)
    tables = [fc_table(mode.huang_rhys, cap) for mode in modes.modes]
    table = _occupation_table(len(energies), cap)
    state_energy = table @ energies
    order = np.argsort(state_energy, kind="stable")
    table, state_energy = table[order], state_energy[order]

    fwhm = modes.lorentzian_fwhm_meV
    window = limits.window_meV(fwhm)
    kT = CONSTANTS.kB_meV_per_K * temperature_K
    low_detuning, high_detuning = float(detunings.min()), float(detunings.max())

    total = np.zeros_like(detunings, dtype=float)
    n_initial = n_terms = 0
    for quanta, e_g in zip(table, state_energy):
        if temperature_K == 0:
            if e_g > 0:
                break
            weight = 1.0
        else:
            weight = math.exp(-e_g / kT)
            if weight < limits.boltzmann_cutoff:
                break
        lo = np.searchsorted(state_energy, e_g - high_detuning - window, side="left")
        hi = np.searchsorted(state_energy, e_g - low_detuning + window, side="right")
        if hi <= lo:
            continue
        band = table[lo:hi]
        overlap = np.ones(hi - lo)
        for k, fc in enumerate(tables):
            overlap *= fc[quanta[k], band[:, k]]
        mismatch = detunings[None, :] + (state_energy[lo:hi] - e_g)[:, None]
        shape = np.where(np.abs(mismatch) <= window, lorentzian(mismatch, fwhm), 0.0)
        total += weight * (overlap @ shape)
        n_initial += 1
        n_terms += hi - lo

    logger.debug(
        f"T={temperature_K} K: {n_initial} initial states, {n_terms} final-state terms"
    )
    return total


def _detunings(wavelengths_nm: Sequence[float], zpl_nm: float) -> np.ndarray:
    return np.array([detuning_below_zpl(w, zpl_nm) for w in wavelengths_nm], dtype=float)


def rate_per_power(
    wavelength_nm: float,
    temperature_K: float,
    modes: ModeSet,
    zpl_nm: float | None = None,
    limits: EnumerationLimits | None = None,
) -> float:
    """Power-density normalised transition rate at one (lambda, T)."""
    return float(rate_per_power_many([wavelength_nm], temperature_K, modes, zpl_nm, limits)[0])


def rate_per_power_many(
    wavelengths_nm: Sequence[float],
    temperature_K: float,
    modes: ModeSet,
    zpl_nm: float | None = None,
    limits: EnumerationLimits | None = None,
) -> np.ndarray:
    """rate_per_power for several wavelengths sharing one temperature."""
    zpl_nm = config.units.nv0_zpl_nm if zpl_nm is None else zpl_nm
    limits = limits or EnumerationLimits()
    if len(wavelengths_nm) == 0:
        return np.zeros(0)
    values = _rates_at_temperature(temperature_K, _detunings(wavelengths_nm, zpl_nm), modes, limits)
    return modes.scale * values


def rate_per_power_bruteforce(
    wavelength_nm: float,
    temperature_K: float,
    modes: ModeSet,
    zpl_nm: float | None = None,
    limits: EnumerationLimits | None = None,
) -> float:
    """Every (n_g, n_e) pair inside the quanta caps, no Boltzmann cutoff, no band search."""
    zpl_nm = config.units.nv0_zpl_nm if zpl_nm is None else zpl_nm
    limits = limits or EnumerationLimits()
    if wavelength_nm < zpl_nm:
        raise DomainError(f"super-resonant excitation out of scope: {wavelength_nm} nm")
    e_zpl = wavelength_to_energy(zpl_nm)
    e_photon = wavelength_to_energy(wavelength_nm)
    window = limits.window_meV(modes.lorentzian_fwhm_meV)
    states = list(itertools.product(range(limits.max_quanta_per_mode + 1), repeat=len(modes.modes)))

    total = 0.0
    for n_g in states:
        weight = boltzmann_weight(n_g, modes, temperature_K)
        if weight == 0.0:
            continue
        for n_e in states:
            mismatch = e_zpl - e_photon + sum(
                mode.energy_meV * (e - g) for mode, g, e in zip(modes.modes, n_g, n_e)
            )
            if abs(mismatch) > window:
                continue
            overlap = 1.0
            for mode, g, e in zip(modes.modes, n_g, n_e):
                overlap *= fc_overlap_sq(mode.huang_rhys, g, e)
            total += weight * lorentzian(mismatch, modes.lorentzian_fwhm_meV) * overlap
    return modes.scale * total


def rate_curve(
    wavelengths_nm: Sequence[float],
    temperatures_K: Sequence[float],
    modes: ModeSet,
    zpl_nm: float | None = None,
    limits: EnumerationLimits | None = None,
    workers: int = 1,
) -> RateCurve:
    """Evaluate the rate on the Cartesian (lambda, T) grid."""
    zpl_nm = config.units.nv0_zpl_nm if zpl_nm is None else zpl_nm
    limits = limits or EnumerationLimits()
    wavelengths = list(wavelengths_nm)
    if not wavelengths:
        return RateCurve()
    detunings = _detunings(wavelengths, zpl_nm)
    evaluate = partial(_rates_at_temperature, detunings=detunings, modes=modes, limits=limits)
    per_temperature = map_points(evaluate, list(temperatures_K), workers)

    points = []
    for temperature, values in zip(temperatures_K, per_temperature):
        for wavelength, value in zip(wavelengths, values):
            points.append(
                RatePoint(
                    wavelength_nm=wavelength,
                    temperature_K=temperature,
                    rate_Hz=modes.scale * float(value),
                )
            )
    return RateCurve(points=points)


def coupling_spectrum(modes: ModeSet, grid_meV: Sequence[float]) -> List[Tuple[float, float]]:
    """S(hbar w) = sum_k L(hbar w_k - hbar w, Gamma) S_k on the grid."""
    grid = np.asarray(grid_meV, dtype=float)
    if grid.size == 0:
        raise DomainError("coupling spectrum grid is empty")
    if np.any(np.diff(grid) < 0):
        raise DomainError("coupling spectrum grid must be sorted")
    values = np.zeros_like(grid)
    for mode in modes.modes:
        values += lorentzian(mode.energy_meV - grid, modes.lorentzian_fwhm_meV) * mode.huang_rhys
    return list(zip(grid.tolist(), values.tolist()))


def emission_spectrum_from_modes(
    modes: ModeSet,
    grid_meV: Sequence[float],
    limits: EnumerationLimits | None = None,
) -> EmissionSpectrum:
    """Zero-temperature emission density A_em(eps) from n_e = 0, with area-normalised lines."""
    limits = limits or EnumerationLimits()
    _check_capacity(modes, limits)
    grid = np.asarray(grid_meV, dtype=float)
    cap = limits.max_quanta_per_mode
    table = _occupation_table(len(modes.modes), cap)
    energies = table @ np.asarray(modes.energies)
    weights = np.ones(len(table))
    for k, mode in enumerate(modes.modes):
        weights *= fc_table(mode.huang_rhys, cap)[table[:, k], 0]

    fwhm = modes.lorentzian_fwhm_meV
    norm = 2.0 / (math.pi * fwhm)
    density = np.zeros_like(grid)
    for energy, weight in zip(energies, weights):
        density += weight * norm * lorentzian(grid - energy, fwhm)
    samples = list(zip(grid.tolist(), density.tolist()))
    return EmissionSpectrum(samples=samples, source_label="effective_modes")


def absolute_rate(rate_per_power_value: float, power_density: float) -> float:
    """R = P * (R / P)."""
    if power_density < 0:
        raise DomainError(f"power density must be non-negative, got {power_density}")
    return rate_per_power_value * power_density
