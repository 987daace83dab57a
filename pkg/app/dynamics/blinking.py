"""Threshold discrimination of charge states and dwell-time rate estimates.

A bin is bright (NV-) when its count exceeds the threshold. Runs shorter than
min_dwell_bins are absorbed into the preceding state, the first and last
dwells are censored, and R = 1 / <t> over the remaining dark dwells.
"""

import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from app.config import AnalysisSettings, config
from app.exceptions import AnalysisError, DomainError, FormatError, InsufficientDataError
from app.formats import PathLike, read_table, write_table
from app.logger import logger
from app.schema import DwellRecord, DwellState, PhotonTrace, RateCurve, RatePoint


RATES_SCHEMA = "rates/v1"
RATE_COLUMNS = ("wavelength_nm", "temperature_K", "rate_Hz", "stderr_Hz", "n_dwells")


def _otsu_split(counts: np.ndarray) -> Tuple[float, float]:
    """Class means of the two-class split maximising the between-class variance."""
    hist = np.bincount(counts).astype(float)
    levels = np.arange(hist.size, dtype=float)
    weight_low = np.cumsum(hist)[:-1]
    mass_low = np.cumsum(hist * levels)[:-1]
    weight_high = hist.sum() - weight_low
    mass_high = (hist * levels).sum() - mass_low
    valid = (weight_low > 0) & (weight_high > 0)
    if not np.any(valid):
        raise AnalysisError("states indistinguishable: every bin has the same count")
    mean_low = np.divide(mass_low, weight_low, out=np.zeros_like(mass_low), where=valid)
    mean_high = np.divide(mass_high, weight_high, out=np.zeros_like(mass_high), where=valid)
    between = np.where(valid, weight_low * weight_high * (mean_high - mean_low) ** 2, -1.0)
    split = int(np.argmax(between))
    return float(mean_low[split]), float(mean_high[split])


def choose_threshold(
    trace: PhotonTrace,
    method: Optional[str] = None,
    value: Optional[float] = None,
    separation_factor: Optional[float] = None,
) -> float:
    """Counts-per-bin threshold separating dark from bright bins.

    "midpoint" splits the count histogram in two classes and returns the
    midpoint of the class means; "fixed" returns value unchanged.
    """
    method = method or config.analysis.threshold_method
    if method == "fixed":
        value = config.analysis.threshold_value if value is None else value
        if value is None:
            raise DomainError("the fixed threshold method needs a threshold value")
        return float(value)
    if method != "midpoint":
        raise DomainError(f"unknown threshold method {method!r}")
    if not trace.counts:
        raise AnalysisError("cannot threshold an empty trace")

    factor = config.analysis.separation_factor if separation_factor is None else separation_factor
    dark_mean, bright_mean = _otsu_split(np.asarray(trace.counts, dtype=np.int64))
    # modal separation in units of the Poisson widths of both classes
    separation = (bright_mean - dark_mean) / (
        math.sqrt(max(bright_mean, 1.0)) + math.sqrt(max(dark_mean, 1.0))
    )
    if separation < factor:
        raise AnalysisError(
            f"states indistinguishable: modal intensities {dark_mean:.3g} and "
            f"{bright_mean:.3g} counts/bin are {separation:.2f} Poisson widths apart"
        )
    return 0.5 * (dark_mean + bright_mean)


def _runs(bright: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    change = np.flatnonzero(np.diff(bright.astype(np.int8))) + 1
    starts = np.concatenate(([0], change))
    lengths = np.diff(np.concatenate((starts, [bright.size])))
    return starts, lengths, bright[starts]


def extract_dwells(
    trace: PhotonTrace, threshold: float, min_dwell_bins: Optional[int] = None
) -> List[DwellRecord]:
    """Interior dwells after debouncing; boundary dwells are dropped."""
    min_dwell_bins = config.analysis.min_dwell_bins if min_dwell_bins is None else min_dwell_bins
    if min_dwell_bins < 1:
        raise DomainError(f"min_dwell_bins must be at least 1, got {min_dwell_bins}")
    if not trace.counts:
        return []
    starts, lengths, states = _runs(np.asarray(trace.counts) > threshold)

    resolved: List[Optional[bool]] = []
    previous: Optional[bool] = None
    for length, state in zip(lengths, states):
        if length >= min_dwell_bins:
            previous = bool(state)
        resolved.append(previous)
    first_kept = next((s for s in resolved if s is not None), None)
    if first_kept is None:
        # nothing survives debouncing
        return []
    resolved = [first_kept if s is None else s for s in resolved]

    merged: List[Tuple[bool, int, int]] = []
    for start, length, state in zip(starts, lengths, resolved):
        if merged and merged[-1][0] == state:
            merged[-1] = (state, merged[-1][1], merged[-1][2] + int(length))
        else:
            merged.append((state, int(start), int(length)))

    return [
        DwellRecord(
            state=DwellState.BRIGHT if state else DwellState.DARK,
            duration_s=length * trace.bin_width_s,
            start_bin=start,
        )
        for state, start, length in merged[1:-1]
    ]


def estimate_rate(
    dwells: List[DwellRecord], state: DwellState = DwellState.DARK
) -> Tuple[float, float]:
    """R = 1 / mean dwell; stderr = R^2 * standard error of the mean."""
    durations = np.array([d.duration_s for d in dwells if d.state == state], dtype=float)
    if durations.size < 2:
        raise InsufficientDataError(
            f"{durations.size} {state.value} dwell(s); at least 2 are needed for a rate"
        )
    mean = float(durations.mean())
    sem = float(durations.std(ddof=1) / math.sqrt(durations.size))
    rate = 1.0 / mean
    return rate, rate * rate * sem


def analyze_trace(
    trace: PhotonTrace, settings: Optional[AnalysisSettings] = None
) -> Tuple[Optional[RatePoint], Dict[str, Any]]:
    """Threshold -> dwells -> dark-state rate, with diagnostics for every outcome."""
    settings = settings or config.analysis
    diagnostics: Dict[str, Any] = {"n_bins": len(trace.counts)}
    try:
        threshold = choose_threshold(
            trace,
            method=settings.threshold_method,
            value=settings.threshold_value,
            separation_factor=settings.separation_factor,
        )
        diagnostics["threshold"] = threshold
        dwells = extract_dwells(trace, threshold, settings.min_dwell_bins)
        n_dark = sum(1 for d in dwells if d.state == DwellState.DARK)
        n_bright = len(dwells) - n_dark
        diagnostics.update(n_dwells=n_dark, n_bright_dwells=n_bright)
        if n_bright >= 2:
            diagnostics["ionization_rate_Hz"], _ = estimate_rate(dwells, DwellState.BRIGHT)
        rate, stderr = estimate_rate(dwells, DwellState.DARK)
        if trace.wavelength_nm is None or trace.temperature_K is None:
            raise AnalysisError("trace carries no wavelength/temperature metadata")
    except AnalysisError as e:
        diagnostics["error"] = str(e)
        logger.warning(f"Trace analysis failed: {e}")
        return None, diagnostics

    point = RatePoint(
        wavelength_nm=trace.wavelength_nm,
        temperature_K=trace.temperature_K,
        rate_Hz=rate,
        stderr_Hz=stderr,
        n_dwells=n_dark,
    )
    return point, diagnostics


def rates_frame(curve: RateCurve) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "wavelength_nm": p.wavelength_nm,
                "temperature_K": p.temperature_K,
                "rate_Hz": p.rate_Hz,
                "stderr_Hz": np.nan if p.stderr_Hz is None else p.stderr_Hz,
                "n_dwells": p.n_dwells,
            }
            for p in curve
        ],
        columns=list(RATE_COLUMNS),
    )


def write_rates(path: PathLike, curve: RateCurve, meta: Optional[Dict[str, object]] = None):
    return write_table(path, rates_frame(curve), schema=RATES_SCHEMA, meta=meta)


def read_rates(path: PathLike) -> RateCurve:
    frame, _ = read_table(path, RATE_COLUMNS, schema=RATES_SCHEMA, nullable=("stderr_Hz",))
    points = []
    for row_number, row in enumerate(frame.itertuples(index=False), start=1):
        try:
            points.append(
                RatePoint(
                    wavelength_nm=row.wavelength_nm,
                    temperature_K=row.temperature_K,
                    rate_Hz=row.rate_Hz,
                    stderr_Hz=None if pd.isna(row.stderr_Hz) else float(row.stderr_Hz),
                    n_dwells=int(row.n_dwells),
                )
            )
        except ValueError as e:
            raise FormatError(f"{path}: data row {row_number}: {e}") from None
    try:
        return RateCurve(points=points)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None
