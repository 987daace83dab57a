"""Quasi-continuum transition rate from a sampled emission spectral density.

R/P = scale * integral_{E_ZPL - E_lambda}^{E_ZPL} exp(-eps / kT) A_em(eps) d eps

The integrand is integrated with the trapezoid rule on the sample grid; the
integration limits cut sample intervals at linearly interpolated integrand
values, so the result is monotone in both the detuning and the temperature.
"""

import math
from functools import partial
from io import StringIO
from pathlib import Path
from typing import List, Literal, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.integrate import trapezoid

from app.config import config
from app.exceptions import DomainError, FormatError
from app.logger import logger
from app.parallel import map_points
from app.physics.units import CONSTANTS, detuning_below_zpl, wavelength_to_energy
from app.schema import RateCurve, RatePoint


SpectrumFormat = Literal["detuning", "photon_energy"]
_HEADERS = {
    "detuning": ("epsilon_meV", "density"),
    "photon_energy": ("photon_energy_meV", "density"),
}


class EmissionSpectrum(BaseModel):
    """Sampled A_em(eps) against detuning below the ZPL"""

    samples: List[Tuple[float, float]]
    source_label: str = "experimental"

    model_config = ConfigDict(frozen=True)

    @field_validator("samples")
    @classmethod
    def _validate_samples(cls, samples: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        if len(samples) < 2:
            raise ValueError("a spectrum needs at least 2 samples")
        energies = np.array([s[0] for s in samples], dtype=float)
        densities = np.array([s[1] for s in samples], dtype=float)
        if not np.all(np.isfinite(energies)) or not np.all(np.isfinite(densities)):
            raise ValueError("spectrum samples must be finite")
        if np.any(energies < 0):
            raise ValueError("negative detuning in spectrum")
        if np.any(np.diff(energies) <= 0):
            raise ValueError("non-increasing abscissa")
        if np.any(densities < 0):
            raise ValueError("negative density in spectrum")
        return samples

    @property
    def energies(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples], dtype=float)

    @property
    def densities(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples], dtype=float)

    def resample(self, step_meV: float) -> "EmissionSpectrum":
        """Uniform grid over the sampled range by linear interpolation."""
        if not step_meV > 0:
            raise DomainError(f"resampling step must be positive, got {step_meV}")
        x = self.energies
        n = int(math.floor((x[-1] - x[0]) / step_meV + 1e-9)) + 1
        grid = x[0] + step_meV * np.arange(n)
        if grid[-1] < x[-1]:
            grid = np.append(grid, x[-1])
        values = np.interp(grid, x, self.densities)
        return EmissionSpectrum(
            samples=list(zip(grid.tolist(), values.tolist())), source_label=self.source_label
        )

    def scaled(self, factor: float) -> "EmissionSpectrum":
        if factor < 0:
            raise DomainError("spectra may only be scaled by non-negative factors")
        return EmissionSpectrum(
            samples=[(e, factor * d) for e, d in self.samples], source_label=self.source_label
        )

    def combine(
        self, other: "EmissionSpectrum", alpha: float = 1.0, beta: float = 1.0
    ) -> "EmissionSpectrum":
        """alpha * self + beta * other on the union of both grids (zero outside each range)."""
        if alpha < 0 or beta < 0:
            raise DomainError("spectra may only be combined with non-negative weights")
        grid = np.union1d(self.energies, other.energies)
        values = alpha * np.interp(grid, self.energies, self.densities, left=0.0, right=0.0)
        values += beta * np.interp(grid, other.energies, other.densities, left=0.0, right=0.0)
        return EmissionSpectrum(
            samples=list(zip(grid.tolist(), values.tolist())),
            source_label=f"{self.source_label}+{other.source_label}",
        )


class QuasiContinuumParams(BaseModel):
    scale: float = Field(1.0, gt=0, description="Merged C |mu|^2 prefactor")
    zpl_nm: float = Field(default_factory=lambda: config.units.nv0_zpl_nm, gt=0)


def _content_lines(text: str) -> List[int]:
    """1-based numbers of the lines read_csv keeps (not blank, not a comment)."""
    return [n for n, raw in enumerate(text.splitlines(), start=1) if raw.split("#", 1)[0].strip()]


def load_spectrum(
    path: Union[str, Path],
    fmt: SpectrumFormat = "detuning",
    zpl_nm: float | None = None,
    source_label: str = "experimental",
) -> EmissionSpectrum:
    """Parse a two-column spectrum CSV; `#` lines are comments."""
    path = Path(path)
    if fmt not in _HEADERS:
        raise FormatError(f"unknown spectrum format {fmt!r}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None

    numbers = _content_lines(text)
    if not numbers:
        raise FormatError(f"{path}: no header row")
    raw_lines = text.splitlines()
    width = max(raw_lines[n - 1].split("#", 1)[0].count(",") for n in numbers) + 1
    try:
        frame = pd.read_csv(
            StringIO(text),
            header=None,
            names=list(range(max(width, 2))),
            dtype=str,
            comment="#",
            skip_blank_lines=True,
            skipinitialspace=True,
        )
    except pd.errors.ParserError as e:
        raise FormatError(f"{path}: {e}") from None
    if len(frame) != len(numbers):
        raise FormatError(f"{path}: rows do not line up with the file's lines")

    header = tuple(v.strip() for v in frame.iloc[0] if isinstance(v, str))
    if header != _HEADERS[fmt]:
        raise FormatError(
            f"expected header {','.join(_HEADERS[fmt])}, got {','.join(header)!r}", line=numbers[0]
        )

    body = frame.iloc[1:]
    if body.empty:
        raise FormatError(f"{path}: a spectrum needs at least 2 samples")
    lines = np.array(numbers[1:], dtype=int)
    counts = body.notna().sum(axis=1).to_numpy()
    bad = (counts != 2) | body[[0, 1]].isna().any(axis=1).to_numpy()
    if bad.any():
        i = int(np.argmax(bad))
        raise FormatError(f"expected 2 columns, got {counts[i]}", line=int(lines[i]))
    numeric = body[[0, 1]].apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    bad = numeric.isna().any(axis=1).to_numpy()
    if bad.any():
        i = int(np.argmax(bad))
        raise FormatError(
            f"non-numeric value in {','.join(body.iloc[i, :2])!r}", line=int(lines[i])
        )

    energies = numeric[0].to_numpy(dtype=float)
    densities = numeric[1].to_numpy(dtype=float)
    negative = densities < 0
    if negative.any():
        raise FormatError("negative density", line=int(lines[np.argmax(negative)]))

    if fmt == "photon_energy":
        e_zpl = wavelength_to_energy(config.units.nv0_zpl_nm if zpl_nm is None else zpl_nm)
        energies = e_zpl - energies
        order = np.argsort(energies, kind="stable")
        energies, densities, lines = energies[order], densities[order], lines[order]
    repeated = np.diff(energies) <= 0
    if repeated.any():
        raise FormatError("non-increasing abscissa", line=int(lines[np.argmax(repeated) + 1]))
    if energies.size and energies[0] < 0:
        raise FormatError("sample above the ZPL (negative detuning)", line=int(lines[0]))

    try:
        spectrum = EmissionSpectrum(
            samples=list(zip(energies.tolist(), densities.tolist())), source_label=source_label
        )
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None
    logger.debug(f"Loaded {energies.size} spectrum samples from {path}")
    return spectrum


def _integrate_window(
    spectrum: EmissionSpectrum, lower_meV: float, upper_meV: float, temperature_K: float
) -> float:
    x = spectrum.energies
    lo, hi = max(lower_meV, x[0]), min(upper_meV, x[-1])
    if lo >= hi:
        return 0.0
    kT = CONSTANTS.kB_meV_per_K * temperature_K
    integrand = spectrum.densities * np.exp(-x / kT)
    nodes = np.concatenate(([lo], x[(x > lo) & (x < hi)], [hi]))
    return float(trapezoid(np.interp(nodes, x, integrand), nodes))


def qc_rate_per_power(
    wavelength_nm: float,
    temperature_K: float,
    spectrum: EmissionSpectrum,
    params: QuasiContinuumParams | None = None,
) -> float:
    """Power-density normalised rate of the quasi-continuum model."""
    params = params or QuasiContinuumParams()
    detuning = detuning_below_zpl(wavelength_nm, params.zpl_nm)
    if temperature_K < 0:
        raise DomainError(f"temperature must be non-negative, got {temperature_K} K")
    if temperature_K == 0:
        return 0.0
    e_zpl = wavelength_to_energy(params.zpl_nm)
    return params.scale * _integrate_window(spectrum, detuning, e_zpl, temperature_K)


def _rates_at_temperature(
    temperature_K: float,
    wavelengths_nm: Sequence[float],
    spectrum: EmissionSpectrum,
    params: QuasiContinuumParams,
) -> List[float]:
    return [qc_rate_per_power(w, temperature_K, spectrum, params) for w in wavelengths_nm]


def qc_rate_curve(
    wavelengths_nm: Sequence[float],
    temperatures_K: Sequence[float],
    spectrum: EmissionSpectrum,
    params: QuasiContinuumParams | None = None,
    workers: int = 1,
) -> RateCurve:
    """Evaluate qc_rate_per_power on the Cartesian (lambda, T) grid."""
    params = params or QuasiContinuumParams()
    wavelengths = list(wavelengths_nm)
    if not wavelengths:
        return RateCurve()
    evaluate = partial(
        _rates_at_temperature, wavelengths_nm=wavelengths, spectrum=spectrum, params=params
    )
    per_temperature = map_points(evaluate, list(temperatures_K), workers)
    return RateCurve(
        points=[
            RatePoint(wavelength_nm=w, temperature_K=t, rate_Hz=value)
            for t, values in zip(temperatures_K, per_temperature)
            for w, value in zip(wavelengths, values)
        ]
    )
