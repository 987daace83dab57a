import threading
import tomllib
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


def get_project_root() -> Path:
    """Get the project root directory"""
    return Path(__file__).resolve().parent.parent


PROJECT_ROOT = get_project_root()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class UnitsSettings(_Section):
    nv0_zpl_nm: float = Field(575.0, gt=0, description="NV0 zero-phonon line (nm)")
    nvm_zpl_nm: float = Field(637.0, gt=0, description="NV- zero-phonon line (nm)")


class FranckCondonSettings(_Section):
    max_total_quanta: int = Field(
        60, ge=1, description="Cap on n_g + n_e for analytic overlaps"
    )
    oracle_max_quanta: int = Field(
        10, ge=0, description="Largest quanta accepted by the quadrature oracle"
    )


class EnumerationSettings(_Section):
    max_quanta_per_mode: int = Field(12, ge=0, description="Quanta cap per mode")
    boltzmann_cutoff: float = Field(
        1e-9, gt=0, description="Drop initial states weighted below this fraction of ground"
    )
    lorentzian_window_halfwidths: float = Field(
        40.0, gt=0, description="Resonance window in units of FWHM/2"
    )
    max_modes: int = Field(4, ge=1, description="Largest effective mode count")
    max_states: int = Field(
        2_000_000, ge=1, description="Largest occupation-vector table size"
    )


class SimulationSettings(_Section):
    """Placeholder photophysics; none of these are measured values."""

    ionization_rate_Hz: float = Field(2.0, gt=0, description="NV- -> NV0 rate")
    bright_count_rate_Hz: float = Field(2.0e4, gt=0, description="NV- count rate")
    dark_count_rate_Hz: float = Field(1.0e3, ge=0, description="NV0 count rate")
    gamma1_Hz: float = Field(1.0e6, gt=0, description="NV0 excited -> NV- rate")
    mu1_Hz: float = Field(7.0e7, ge=0, description="NV0 excited-state relaxation")
    first_passage_chunk: int = Field(
        100_000, ge=1, description="Trials per independent random stream"
    )


class AnalysisSettings(_Section):
    threshold_method: Literal["midpoint", "fixed"] = Field(
        "midpoint", description="Threshold selection rule"
    )
    threshold_value: float | None = Field(
        None, description="Threshold used by the fixed method (counts per bin)"
    )
    min_dwell_bins: int = Field(2, ge=1, description="Debouncing run length")
    separation_factor: float = Field(
        2.0, gt=0, description="Minimum modal separation in Poisson widths"
    )


class FittingSettings(_Section):
    loss_space: Literal["log_rate", "linear_rate"] = Field(
        "log_rate", description="Residual space"
    )
    max_nfev: int = Field(4000, ge=10, description="Objective evaluation budget per start")
    multistart: int = Field(1, ge=1, description="Number of simplex starts")
    polish: bool = Field(
        True, description="Refine the best simplex point with bounded least squares"
    )
    zero_rate_penalty: float = Field(
        50.0, gt=0, description="Residual assigned to non-positive model rates"
    )


class OutputSettings(_Section):
    directory: str = Field("output", description="Default output directory")
    env_var: str = Field(
        "NVCYCLE_OUTPUT_DIR", description="Environment variable overriding the directory"
    )
    workers: int = Field(1, ge=1, description="Processes used for grid evaluation")


class LoggingSettings(_Section):
    print_level: str = Field("INFO", description="stderr log level")
    logfile_level: str = Field("DEBUG", description="Log file level")


class AppConfig(BaseModel):
    units: UnitsSettings = Field(default_factory=UnitsSettings)
    franck_condon: FranckCondonSettings = Field(default_factory=FranckCondonSettings)
    enumeration: EnumerationSettings = Field(default_factory=EnumerationSettings)
    simulation: SimulationSettings = Field(default_factory=SimulationSettings)
    analysis: AnalysisSettings = Field(default_factory=AnalysisSettings)
    fitting: FittingSettings = Field(default_factory=FittingSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)

    model_config = ConfigDict(extra="forbid")


class Config:
    _instance = None
    _lock = threading.Lock()
    _initialized = False

    def __new__(cls):
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if not self._initialized:
            with self._lock:
                if not self._initialized:
                    self._config = None
                    self._load_initial_config()
                    self._initialized = True

    @staticmethod
    def _get_config_path() -> Path | None:
        root = PROJECT_ROOT
        config_path = root / "config" / "config.toml"
        if config_path.exists():
            return config_path
        example_path = root / "config" / "config.example.toml"
        if example_path.exists():
            return example_path
        return None

    def _load_config(self) -> dict:
        config_path = self._get_config_path()
        if config_path is None:
            return {}
        with config_path.open("rb") as f:
            return tomllib.load(f)

    def _load_initial_config(self):
        raw_config = self._load_config()
        # sections absent from the file keep their defaults
        self._config = AppConfig(
            **{k: v for k, v in raw_config.items() if isinstance(v, dict)}
        )

    @property
    def units(self) -> UnitsSettings:
        return self._config.units

    @property
    def franck_condon(self) -> FranckCondonSettings:
        return self._config.franck_condon

    @property
    def enumeration(self) -> EnumerationSettings:
        return self._config.enumeration

    @property
    def simulation(self) -> SimulationSettings:
        return self._config.simulation

    @property
    def analysis(self) -> AnalysisSettings:
        return self._config.analysis

    @property
    def fitting(self) -> FittingSettings:
        return self._config.fitting

    @property
    def output(self) -> OutputSettings:
        return self._config.output

    @property
    def logging(self) -> LoggingSettings:
        return self._config.logging

    @property
    def root_path(self) -> Path:
        """Get the root path of the application"""
        return PROJECT_ROOT


config = Config()
