"""Three-state NV0 charge-cycling chain and synthetic blinking traces.

State 0 is the NV0 ground state, state 1 the NV0 excited state and state 2
(absorbing) NV-. Rates: 0 -> 1 gamma0, 1 -> 2 gamma1, 1 -> 0 mu1.
"""

import math
from functools import partial
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import config
from app.exceptions import DomainError, FormatError
from app.formats import PathLike, read_table, write_table
from app.logger import logger
from app.parallel import map_points
from app.schema import DwellState, PhotonTrace


TRACE_SCHEMA = "trace/v1"


class ChainSpec(BaseModel):
    gamma0: float = Field(..., gt=0, description="NV0 ground -> excited (Hz)")
    gamma1: float = Field(..., gt=0, description="NV0 excited -> NV- (Hz); inf allowed")
    mu1: float = Field(0.0, ge=0, description="NV0 excited -> ground relaxation (Hz)")

    model_config = ConfigDict(frozen=True)


class Photophysics(BaseModel):
    """Cross-sections, spontaneous relaxation and photon flux of the NV0 cycle"""

    sigma: float = Field(..., ge=0, description="Ground-state absorption cross-section")
    sigma_prime: float = Field(..., ge=0, description="Excited-state absorption cross-section")
    L: float = Field(..., ge=0, description="Spontaneous relaxation rate (Hz)")
    flux: float = Field(..., ge=0, description="Photon flux (per area per second)")

    def to_chain(self) -> ChainSpec:
        return ChainSpec(
            gamma0=self.sigma * self.flux, gamma1=self.sigma_prime * self.flux, mu1=self.L
        )


class CycleSpec(BaseModel):
    """NV0 chain plus the effective NV- bright state. Defaults are placeholders."""

    chain: ChainSpec
    ionization_rate: float = Field(
        default_factory=lambda: config.simulation.ionization_rate_Hz, gt=0
    )
    bright_count_rate: float = Field(
        default_factory=lambda: config.simulation.bright_count_rate_Hz, gt=0
    )
    dark_count_rate: float = Field(
        default_factory=lambda: config.simulation.dark_count_rate_Hz, ge=0
    )

    @model_validator(mode="after")
    def _check_contrast(self) -> "CycleSpec":
        if self.dark_count_rate > self.bright_count_rate:
            raise ValueError("dark_count_rate must not exceed bright_count_rate")
        if self.dark_count_rate == self.bright_count_rate:
            logger.warning("Equal bright and dark count rates: the trace has no blinking contrast")
        return self


def mfpt_rate(chain: ChainSpec) -> float:
    """Inverse mean first-passage time 0 -> 2: gamma0 gamma1 / (gamma0 + gamma1 + mu1)."""
    if math.isinf(chain.gamma1):
        return chain.gamma0
    return chain.gamma0 * chain.gamma1 / (chain.gamma0 + chain.gamma1 + chain.mu1)


def rate_from_photophysics(p: Photophysics, exact: bool = False) -> float:
    """sigma Phi / (1 + L / (sigma' Phi)); exact=True keeps the sigma / sigma' term."""
    if not p.flux > 0:
        raise DomainError("photon flux must be positive")
    if not p.sigma_prime > 0:
        raise DomainError("excited-state cross-section must be positive")
    saturation = p.L / (p.sigma_prime * p.flux)
    if exact:
        return p.sigma * p.flux / (1.0 + p.sigma / p.sigma_prime + saturation)
    return p.sigma * p.flux / (1.0 + saturation)


def chain_for_rate(rate_Hz: float, gamma1: float, mu1: float = 0.0) -> ChainSpec:
    """Chain with the given gamma1, mu1 whose mfpt_rate equals rate_Hz."""
    if not rate_Hz > 0:
        raise DomainError(f"target rate must be positive, got {rate_Hz}")
    if math.isinf(gamma1):
        return ChainSpec(gamma0=rate_Hz, gamma1=gamma1, mu1=mu1)
    if not gamma1 > rate_Hz:
        raise DomainError(f"gamma1={gamma1} Hz cannot sustain a rate of {rate_Hz} Hz")
    return ChainSpec(gamma0=rate_Hz * (gamma1 + mu1) / (gamma1 - rate_Hz), gamma1=gamma1, mu1=mu1)


def expected_dark_fraction(cycle: CycleSpec) -> float:
    dark = 1.0 / mfpt_rate(cycle.chain)
    return dark / (dark + 1.0 / cycle.ionization_rate)


def sample_first_passage(chain: ChainSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """Passage times 0 -> 2 drawn from the embedded jump chain.

    The number K of visits to state 1 is geometric with success probability
    gamma1 / (gamma1 + mu1); given K, the time is the sum of K holding times in
    each state, i.e. two gamma variates.
    """
    if math.isinf(chain.gamma1):
        return rng.exponential(1.0 / chain.gamma0, size)
    exit_rate = chain.gamma1 + chain.mu1
    visits = rng.geometric(chain.gamma1 / exit_rate, size)
    return rng.gamma(visits, 1.0 / chain.gamma0) + rng.gamma(visits, 1.0 / exit_rate)


def _first_passage_chunk(job: Tuple[np.random.SeedSequence, int], chain: ChainSpec) -> np.ndarray:
    seed_seq, size = job
    return sample_first_passage(chain, size, np.random.default_rng(seed_seq))


def simulate_first_passage(
    chain: ChainSpec,
    trials: int,
    seed: int,
    workers: int = 1,
    chunk: Optional[int] = None,
) -> Tuple[float, float]:
    """Monte Carlo mean first-passage time and its standard error (s).

    Trials are split into fixed-size chunks, each with its own spawned stream,
    so the result depends only on the seed and chunk size.
    """
    if trials < 1:
        raise DomainError(f"need at least one trial, got {trials}")
    chunk = chunk or config.simulation.first_passage_chunk
    sizes = [chunk] * (trials // chunk) + ([trials % chunk] if trials % chunk else [])
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    parts = map_points(partial(_first_passage_chunk, chain=chain), list(zip(streams, sizes)), workers)
    times = np.concatenate(parts)
    mean = float(times.mean())
    stderr = float(times.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    logger.debug(f"First passage over {trials} trials: mean={mean:.6g} s, stderr={stderr:.3g} s")
    return mean, stderr


def _dwell_sequence(
    cycle: CycleSpec, duration_s: float, rng: np.random.Generator
) -> np.ndarray:
    """Alternating bright, dark, bright, ... dwell durations covering duration_s."""
    mean_cycle = 1.0 / cycle.ionization_rate + 1.0 / mfpt_rate(cycle.chain)
    blocks: List[np.ndarray] = []
    covered = 0.0
    while covered < duration_s:
        n = int(math.ceil(1.2 * (duration_s - covered) / mean_cycle)) + 16
        bright = rng.exponential(1.0 / cycle.ionization_rate, n)
        dark = sample_first_passage(cycle.chain, n, rng)
        block = np.column_stack([bright, dark]).ravel()
        blocks.append(block)
        covered += float(block.sum())
    return np.concatenate(blocks)


def simulate_blinking(
    cycle: CycleSpec,
    duration_s: float,
    bin_width_s: float,
    seed: int,
    wavelength_nm: Optional[float] = None,
    temperature_K: Optional[float] = None,
) -> PhotonTrace:
    """Binned photon counts of the NV- <-> NV0 cycle, starting in NV-.

    Bins straddling a transition are Poisson with the time-weighted intensity.
    """
    if not duration_s > 0 or not bin_width_s > 0:
        raise DomainError("duration and bin width must be positive")
    n_bins = max(1, int(math.floor(duration_s / bin_width_s + 1e-9)))
    dwell_stream, count_stream = np.random.SeedSequence(seed).spawn(2)

    durations = _dwell_sequence(cycle, n_bins * bin_width_s, np.random.default_rng(dwell_stream))
    is_bright = np.arange(len(durations)) % 2 == 0
    edges = np.concatenate(([0.0], np.cumsum(durations)))
    bright_clock = np.concatenate(([0.0], np.cumsum(np.where(is_bright, durations, 0.0))))

    bin_edges = bin_width_s * np.arange(n_bins + 1)
    bright_time = np.diff(np.interp(bin_edges, edges, bright_clock))
    bright_time = np.clip(bright_time, 0.0, bin_width_s)
    intensity = (
        cycle.bright_count_rate * bright_time
        + cycle.dark_count_rate * (bin_width_s - bright_time)
    )
    counts = np.random.default_rng(count_stream).poisson(intensity)
    truth = [
        DwellState.BRIGHT if t >= 0.5 * bin_width_s else DwellState.DARK for t in bright_time
    ]
    logger.debug(
        f"Simulated {n_bins} bins, {int(np.searchsorted(edges, n_bins * bin_width_s))} dwells"
    )
    return PhotonTrace(
        bin_width_s=bin_width_s,
        counts=counts.tolist(),
        true_state_per_bin=truth,
        wavelength_nm=wavelength_nm,
        temperature_K=temperature_K,
    )


def write_trace(path: PathLike, trace: PhotonTrace) -> Path:
    frame = pd.DataFrame(
        {
            "t_s": trace.bin_width_s * np.arange(len(trace.counts)),
            "counts": np.asarray(trace.counts, dtype=np.int64),
        }
    )
    meta = {"bin_width_s": repr(float(trace.bin_width_s))}
    if trace.wavelength_nm is not None:
        meta["wavelength_nm"] = repr(float(trace.wavelength_nm))
    if trace.temperature_K is not None:
        meta["temperature_K"] = repr(float(trace.temperature_K))
    return write_table(path, frame, schema=TRACE_SCHEMA, meta=meta)


def read_trace(path: PathLike) -> PhotonTrace:
    frame, meta = read_table(path, ("t_s", "counts"), schema=TRACE_SCHEMA)
    if "bin_width_s" not in meta:
        raise FormatError(f"{path}: missing '# bin_width_s=' comment")
    try:
        bin_width = float(meta["bin_width_s"])
        wavelength = float(meta["wavelength_nm"]) if "wavelength_nm" in meta else None
        temperature = float(meta["temperature_K"]) if "temperature_K" in meta else None
    except ValueError as e:
        raise FormatError(f"{path}: bad metadata value ({e})") from None
    counts = frame["counts"].to_numpy()
    if np.any(counts != np.round(counts)) or np.any(counts < 0):
        raise FormatError(f"{path}: counts must be non-negative integers")
    try:
        return PhotonTrace(
            bin_width_s=bin_width,
            counts=counts.astype(np.int64).tolist(),
            wavelength_nm=wavelength,
            temperature_K=temperature,
        )
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None
