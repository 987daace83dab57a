from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import config
from app.physics.units import PositiveEnergyMeV, TemperatureK, WavelengthNm


class DwellState(str, Enum):
    """Charge-state classes of a photon trace"""

    BRIGHT = "bright"
    DARK = "dark"


class PhononMode(BaseModel):
    """A single (effective) vibrational mode with its partial Huang-Rhys factor"""

    energy_meV: PositiveEnergyMeV = Field(..., description="Mode energy hbar*omega_k")
    huang_rhys: float = Field(..., ge=0, description="Partial Huang-Rhys factor S_k")
    label: str = Field("", description="Free-form mode name")

    model_config = ConfigDict(frozen=True)


class ModeSet(BaseModel):
    """Effective modes sharing one Lorentzian broadening and one rate scale"""

    modes: List[PhononMode]
    lorentzian_fwhm_meV: PositiveEnergyMeV = Field(..., description="Shared FWHM Gamma")
    scale: float = Field(1.0, gt=0, description="Merged C' |mu|^2 prefactor")

    model_config = ConfigDict(frozen=True)

    @field_validator("modes")
    @classmethod
    def _check_mode_count(cls, modes: List[PhononMode]) -> List[PhononMode]:
        if not 1 <= len(modes) <= config.enumeration.max_modes:
            raise ValueError(
                f"mode count must lie in [1, {config.enumeration.max_modes}], got {len(modes)}"
            )
        return modes

    @property
    def energies(self) -> List[float]:
        return [mode.energy_meV for mode in self.modes]

    @property
    def huang_rhys(self) -> List[float]:
        return [mode.huang_rhys for mode in self.modes]

    def with_huang_rhys(self, values: List[float]) -> "ModeSet":
        """Return a copy with replaced S_k values"""
        modes = [
            mode.model_copy(update={"huang_rhys": float(s)})
            for mode, s in zip(self.modes, values)
        ]
        return self.model_copy(update={"modes": modes})


class RatePoint(BaseModel):
    """A transition rate R(lambda, T) with its uncertainty"""

    wavelength_nm: WavelengthNm
    temperature_K: TemperatureK
    rate_Hz: float = Field(..., ge=0)
    stderr_Hz: Optional[float] = Field(None, ge=0)
    n_dwells: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _stderr_present(self) -> "RatePoint":
        if self.n_dwells >= 2 and self.stderr_Hz is None:
            raise ValueError("stderr_Hz is required when n_dwells >= 2")
        return self

    @property
    def key(self) -> tuple:
        return (self.wavelength_nm, self.temperature_K)


class RateCurve(BaseModel):
    """A set of rate points with unique (lambda, T) keys"""

    points: List[RatePoint] = Field(default_factory=list)

    @field_validator("points")
    @classmethod
    def _unique_keys(cls, points: List[RatePoint]) -> List[RatePoint]:
        keys = [point.key for point in points]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (wavelength, temperature) keys in rate curve")
        return points

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def temperatures(self) -> List[float]:
        return sorted({point.temperature_K for point in self.points})

    def at_temperature(self, temperature_K: float) -> List[RatePoint]:
        """Points at one temperature, sorted by wavelength"""
        selected = [p for p in self.points if p.temperature_K == temperature_K]
        return sorted(selected, key=lambda p: p.wavelength_nm)


class PhotonTrace(BaseModel):
    """Binned photon counts"""

    bin_width_s: float = Field(..., gt=0)
    counts: List[int] = Field(default_factory=list)
    true_state_per_bin: Optional[List[DwellState]] = Field(
        None, description="Simulation ground truth, validation only"
    )
    wavelength_nm: Optional[float] = None
    temperature_K: Optional[float] = None

    @field_validator("counts")
    @classmethod
    def _non_negative(cls, counts: List[int]) -> List[int]:
        if any(c < 0 for c in counts):
            raise ValueError("photon counts must be non-negative")
        return counts

    @property
    def duration_s(self) -> float:
        return len(self.counts) * self.bin_width_s


class DwellRecord(BaseModel):
    """An uninterrupted stay in one charge state"""

    state: DwellState
    duration_s: float = Field(..., gt=0)
    start_bin: int = Field(..., ge=0)

    model_config = ConfigDict(frozen=True)
