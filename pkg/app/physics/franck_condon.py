"""Displaced-harmonic-oscillator Franck-Condon factors.

The analytic overlap is evaluated in log-factorial space with sign tracking;
a quadrature oracle built from Hermite functions provides an independent check.
Both oscillators share one frequency (equal-mode approximation).
"""

import math
from functools import lru_cache
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy import integrate
from scipy.special import eval_hermite, gammaln, logsumexp

from app.config import config
from app.exceptions import CapacityError, DomainError, NumericError
from app.physics.units import CONSTANTS
from app.schema import PhononMode


class OscillatorState(BaseModel):
    quanta: int = Field(..., ge=0)


def _check_arguments(S: float, n_g: int, n_e: int) -> None:
    if S < 0 or not math.isfinite(S):
        raise DomainError(f"Huang-Rhys factor must be non-negative, got {S}")
    if n_g < 0 or n_e < 0:
        raise DomainError(f"quanta must be non-negative, got ({n_g}, {n_e})")


def fc_overlap_sq(S: float, n_g: int, n_e: int, max_total_quanta: int | None = None) -> float:
    """|<chi_{n_e}|chi_{n_g}>|^2 for two oscillators displaced by Huang-Rhys factor S."""
    _check_arguments(S, n_g, n_e)
    cap = config.franck_condon.max_total_quanta if max_total_quanta is None else max_total_quanta
    if n_g + n_e > cap:
        raise CapacityError(
            f"n_g + n_e = {n_g + n_e} exceeds the overlap cap {cap}",
            suggestion=f"lower the per-mode quanta cap to at most {cap // 2}",
        )
    return _fc_overlap_sq(float(S), int(n_g), int(n_e))


@lru_cache(maxsize=65536)
def _fc_overlap_sq(S: float, n_g: int, n_e: int) -> float:
    # sum is symmetric in (n_g, n_e); canonical order keeps the cache small
    a, b = min(n_g, n_e), max(n_g, n_e)
    if S == 0.0:
        return 1.0 if a == b else 0.0

    ell = np.arange(a + 1)
    half = 0.5 * (a + b)
    log_terms = (
        (half - ell) * math.log(S)
        - gammaln(ell + 1)
        - gammaln(a - ell + 1)
        - gammaln(b - ell + 1)
    )
    signs = np.where(ell % 2 == 0, 1.0, -1.0)
    log_abs_sum, sign = logsumexp(log_terms, b=signs, return_sign=True)
    if sign == 0:
        return 0.0
    log_value = -S + gammaln(a + 1) + gammaln(b + 1) + 2.0 * log_abs_sum
    return float(min(1.0, math.exp(log_value)))


@lru_cache(maxsize=1024)
def _fc_table(S: float, n_max: int) -> np.ndarray:
    table = np.empty((n_max + 1, n_max + 1))
    for n_g in range(n_max + 1):
        for n_e in range(n_g, n_max + 1):
            table[n_g, n_e] = table[n_e, n_g] = _fc_overlap_sq(S, n_g, n_e)
    table.setflags(write=False)
    return table


def fc_table(S: float, n_max: int) -> np.ndarray:
    """Read-only matrix T[n_g, n_e] of overlaps for quanta up to n_max."""
    fc_overlap_sq(S, n_max, n_max)
    return _fc_table(float(S), int(n_max))


def oscillator_wavefunction(n: int, x: np.ndarray | float) -> np.ndarray:
    """Normalized harmonic oscillator state in the dimensionless coordinate sqrt(omega/hbar) Q."""
    norm = math.exp(-0.5 * (n * math.log(2.0) + gammaln(n + 1))) * math.pi ** -0.25
    x = np.asarray(x, dtype=float)
    return norm * np.exp(-0.5 * x**2) * eval_hermite(n, x)


def numeric_overlap_oracle(
    S: float,
    n_g: int,
    n_e: int,
    epsabs: float = 1e-13,
    epsrel: float = 1e-12,
    limit: int = 400,
) -> float:
    """Squared overlap by adaptive quadrature of the two Hermite functions.

    In dimensionless units the equilibria are separated by sqrt(2 S).
    """
    _check_arguments(S, n_g, n_e)
    oracle_cap = config.franck_condon.oracle_max_quanta
    if max(n_g, n_e) > oracle_cap:
        raise CapacityError(
            f"quadrature oracle accepts at most {oracle_cap} quanta",
            suggestion="use fc_overlap_sq for larger quanta",
        )
    shift = math.sqrt(2.0 * S)
    n_top = max(n_g, n_e)
    # classical turning point of the highest state plus 8 widths on both sides
    half_width = math.sqrt(2.0 * n_top + 1.0) + 8.0
    lower, upper = -half_width, shift + half_width

    def integrand(x: float) -> float:
        return float(oscillator_wavefunction(n_g, x - shift) * oscillator_wavefunction(n_e, x))

    value, abserr, info = integrate.quad(
        integrand, lower, upper, epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1
    )[:3]
    if abserr > 1e-9:
        raise NumericError(
            "overlap quadrature did not converge",
            diagnostics={
                "S": S,
                "n_g": n_g,
                "n_e": n_e,
                "abserr": abserr,
                "subintervals": info.get("last"),
                "interval": (lower, upper),
            },
        )
    return value**2


def huang_rhys_from_displacement(omega_meV: float, delta_q: float) -> float:
    """S = omega dQ^2 / 2 hbar with omega given as hbar*omega (meV) and dQ in sqrt(amu) A."""
    if not omega_meV > 0:
        raise DomainError(f"mode energy must be positive, got {omega_meV} meV")
    return CONSTANTS.huang_rhys_factor * omega_meV * delta_q**2


def displacement_from_huang_rhys(omega_meV: float, S: float) -> float:
    if not omega_meV > 0:
        raise DomainError(f"mode energy must be positive, got {omega_meV} meV")
    if S < 0:
        raise DomainError(f"Huang-Rhys factor must be non-negative, got {S}")
    return math.sqrt(S / (CONSTANTS.huang_rhys_factor * omega_meV))


def vibrational_energy(quanta: Sequence[int], modes: Sequence[PhononMode]) -> float:
    """Sum_k hbar*omega_k (n_k + 1/2), in meV."""
    if len(quanta) != len(modes):
        raise DomainError("occupation vector length differs from mode count")
    return sum(mode.energy_meV * (n + 0.5) for n, mode in zip(quanta, modes))
