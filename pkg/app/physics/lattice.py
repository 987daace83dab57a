"""Harmonic toy lattices, their normal modes and partial Huang-Rhys factors.

Lattice units: masses in amu, lengths in Angstrom, spring constants in eV/A^2,
so that eigenvalues of the dynamical matrix are angular frequencies squared in
eV/(A^2 amu). Mode energies are converted to meV with
CONSTANTS.lattice_energy_factor.

All parameters here are illustrative; none describe diamond.
"""

import math
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from app.exceptions import DomainError, InstabilityError, StructuralError
from app.formats import write_table
from app.logger import logger
from app.physics.franck_condon import huang_rhys_from_displacement
from app.physics.units import CONSTANTS
from app.schema import PhononMode


ZERO_MODE_TOLERANCE = 1e-8
ILLUSTRATIVE_NOTE = "illustrative toy lattice, not fitted to diamond"


class Spring(BaseModel):
    """Pair interaction with longitudinal k and transverse k_t (eV/A^2)"""

    i: int = Field(..., ge=0)
    j: int = Field(..., ge=0)
    k: float = Field(..., ge=0)
    k_t: float = Field(0.0, ge=0)


class ToyLattice(BaseModel):
    dimension: Literal[1, 2, 3]
    masses: List[float] = Field(..., min_length=1, description="Site masses (amu)")
    equilibrium_positions_g: List[List[float]] = Field(
        ..., description="Ground-state equilibrium positions (A)"
    )
    springs: List[Spring] = Field(default_factory=list)
    boundary: Literal["periodic", "free"] = "free"
    cell: Optional[List[float]] = Field(
        None, description="Periodic box lengths per dimension (A)"
    )
    note: str = ILLUSTRATIVE_NOTE

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check_geometry(self) -> "ToyLattice":
        n = len(self.masses)
        if any(not m > 0 for m in self.masses):
            raise ValueError("masses must be positive")
        if len(self.equilibrium_positions_g) != n:
            raise ValueError("one position per site is required")
        if any(len(r) != self.dimension for r in self.equilibrium_positions_g):
            raise ValueError(f"positions must have {self.dimension} components")
        for spring in self.springs:
            if spring.i >= n or spring.j >= n or spring.i == spring.j:
                raise ValueError(f"invalid spring between sites {spring.i} and {spring.j}")
        if self.boundary == "periodic":
            if self.cell is None or len(self.cell) != self.dimension:
                raise ValueError("periodic lattices need a cell length per dimension")
            if any(not c > 0 for c in self.cell):
                raise ValueError("cell lengths must be positive")
        return self

    @property
    def n_sites(self) -> int:
        return len(self.masses)

    @property
    def positions(self) -> np.ndarray:
        return np.asarray(self.equilibrium_positions_g, dtype=float)

    def separation(self, i: int, j: int) -> np.ndarray:
        """r_j - r_i, using the minimum image for periodic boundaries."""
        d = self.positions[j] - self.positions[i]
        if self.boundary == "periodic":
            cell = np.asarray(self.cell, dtype=float)
            d -= cell * np.round(d / cell)
        return d

    @classmethod
    def monatomic_chain(
        cls, n_sites: int, mass: float, k: float, spacing: float = 1.0, boundary: str = "periodic"
    ) -> "ToyLattice":
        if n_sites < (3 if boundary == "periodic" else 2):
            raise DomainError(f"chain too short: {n_sites} sites")
        n_bonds = n_sites if boundary == "periodic" else n_sites - 1
        return cls(
            dimension=1,
            masses=[mass] * n_sites,
            equilibrium_positions_g=[[m * spacing] for m in range(n_sites)],
            springs=[Spring(i=m, j=(m + 1) % n_sites, k=k) for m in range(n_bonds)],
            boundary=boundary,
            cell=[n_sites * spacing] if boundary == "periodic" else None,
        )

    @classmethod
    def diatomic_chain(
        cls, n_cells: int, mass_a: float, mass_b: float, k: float, spacing: float = 1.0
    ) -> "ToyLattice":
        """Periodic ABAB... chain; the unit cell is 2 * spacing long."""
        if n_cells < 2:
            raise DomainError(f"diatomic chain needs at least 2 cells, got {n_cells}")
        n_sites = 2 * n_cells
        return cls(
            dimension=1,
            masses=[mass_a if m % 2 == 0 else mass_b for m in range(n_sites)],
            equilibrium_positions_g=[[m * spacing] for m in range(n_sites)],
            springs=[Spring(i=m, j=(m + 1) % n_sites, k=k) for m in range(n_sites)],
            boundary="periodic",
            cell=[n_sites * spacing],
        )

    @classmethod
    def square_lattice(
        cls,
        nx: int,
        ny: int,
        mass: float,
        k: float,
        k_t: float,
        spacing: float = 1.0,
        boundary: str = "periodic",
    ) -> "ToyLattice":
        """Nearest-neighbour square lattice; k_t > 0 removes the row-sliding zero modes."""
        if boundary == "periodic" and min(nx, ny) < 3:
            raise DomainError("periodic square lattices need at least 3 sites per side")

        def index(x: int, y: int) -> int:
            return y * nx + x

        springs = []
        for y in range(ny):
            for x in range(nx):
                if boundary == "periodic" or x + 1 < nx:
                    springs.append(Spring(i=index(x, y), j=index((x + 1) % nx, y), k=k, k_t=k_t))
                if boundary == "periodic" or y + 1 < ny:
                    springs.append(Spring(i=index(x, y), j=index(x, (y + 1) % ny), k=k, k_t=k_t))
        return cls(
            dimension=2,
            masses=[mass] * (nx * ny),
            equilibrium_positions_g=[[x * spacing, y * spacing] for y in range(ny) for x in range(nx)],
            springs=springs,
            boundary=boundary,
            cell=[nx * spacing, ny * spacing] if boundary == "periodic" else None,
        )


class NormalModes(BaseModel):
    """Eigenpairs of a dynamical matrix, sorted by frequency"""

    eigenvalues: np.ndarray = Field(..., description="omega^2 in lattice units")
    omega: np.ndarray = Field(..., description="Angular frequency in lattice units")
    eigenvectors: np.ndarray = Field(..., description="Orthonormal columns eta^k")
    zero_mode: np.ndarray = Field(..., description="True for translational modes")

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def energies_meV(self) -> np.ndarray:
        return self.omega * CONSTANTS.lattice_energy_factor

    @property
    def n_zero_modes(self) -> int:
        return int(np.count_nonzero(self.zero_mode))

    def __len__(self) -> int:
        return len(self.omega)


class DisplacementField(BaseModel):
    """R^e - R^g per site (A)"""

    delta_R: List[List[float]]

    def as_array(self, lattice: ToyLattice) -> np.ndarray:
        array = np.asarray(self.delta_R, dtype=float)
        if array.shape != (lattice.n_sites, lattice.dimension):
            raise DomainError(
                f"displacement shape {array.shape} does not match lattice "
                f"({lattice.n_sites}, {lattice.dimension})"
            )
        return array


def _check_connected(lattice: ToyLattice) -> None:
    bonds = [(s.i, s.j) for s in lattice.springs if s.k > 0 or s.k_t > 0]
    n = lattice.n_sites
    if n == 1:
        return
    rows = np.array([b[0] for b in bonds], dtype=int)
    cols = np.array([b[1] for b in bonds], dtype=int)
    graph = coo_matrix((np.ones(len(bonds)), (rows, cols)), shape=(n, n))
    n_components, _ = connected_components(graph, directed=False)
    if n_components > 1:
        raise StructuralError(f"lattice splits into {n_components} disconnected parts")


def build_dynamical_matrix(lattice: ToyLattice) -> np.ndarray:
    """D[(m,a),(n,b)] = Phi[(m,a),(n,b)] / sqrt(M_m M_n) for harmonic springs."""
    _check_connected(lattice)
    dim = lattice.dimension
    size = lattice.n_sites * dim
    phi = np.zeros((size, size))
    identity = np.eye(dim)
    for spring in lattice.springs:
        d = lattice.separation(spring.i, spring.j)
        length = float(np.linalg.norm(d))
        if length == 0.0:
            raise DomainError(f"sites {spring.i} and {spring.j} coincide")
        e = d / length
        longitudinal = np.outer(e, e)
        block = spring.k * longitudinal + spring.k_t * (identity - longitudinal)
        a, b = spring.i * dim, spring.j * dim
        phi[a : a + dim, a : a + dim] += block
        phi[b : b + dim, b : b + dim] += block
        phi[a : a + dim, b : b + dim] -= block
        phi[b : b + dim, a : a + dim] -= block
    mass = np.repeat(np.asarray(lattice.masses, dtype=float), dim)
    return phi / np.sqrt(np.outer(mass, mass))


def solve_modes(dynamical_matrix: np.ndarray) -> NormalModes:
    """Diagonalise D; eigenvalues within the zero-mode tolerance become omega = 0."""
    D = np.asarray(dynamical_matrix, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DomainError(f"dynamical matrix must be square, got shape {D.shape}")
    scale = float(np.max(np.abs(D))) or 1.0
    if np.max(np.abs(D - D.T)) > 1e-12 * scale:
        raise DomainError("dynamical matrix is not symmetric")

    eigenvalues, eigenvectors = linalg.eigh(D)
    scale = float(np.max(np.abs(eigenvalues))) or 1.0
    tolerance = ZERO_MODE_TOLERANCE * scale
    if eigenvalues[0] < -tolerance:
        raise InstabilityError(
            f"negative eigenvalue {eigenvalues[0]:.3e} (omega^2, lattice units)",
            eigenvalue=float(eigenvalues[0]),
        )
    zero_mode = np.abs(eigenvalues) < tolerance
    omega = np.where(zero_mode, 0.0, np.sqrt(np.clip(eigenvalues, 0.0, None)))
    logger.debug(f"Solved {len(eigenvalues)} modes, {int(zero_mode.sum())} zero modes")
    return NormalModes(
        eigenvalues=eigenvalues, omega=omega, eigenvectors=eigenvectors, zero_mode=zero_mode
    )


def project_displacement(
    modes: NormalModes, lattice: ToyLattice, displacement: DisplacementField
) -> np.ndarray:
    """dQ_k = sum_m sqrt(M_m) (R^e_m - R^g_m) . eta^k_m, in sqrt(amu) A."""
    delta = displacement.as_array(lattice).reshape(-1)
    sqrt_mass = np.repeat(np.sqrt(np.asarray(lattice.masses, dtype=float)), lattice.dimension)
    if modes.eigenvectors.shape[0] != delta.size:
        raise DomainError("normal modes do not belong to this lattice")
    return modes.eigenvectors.T @ (sqrt_mass * delta)


def huang_rhys_spectrum(
    modes: NormalModes, delta_q: Sequence[float], label_prefix: str = "mode"
) -> List[PhononMode]:
    """Partial Huang-Rhys factor of every non-zero mode."""
    delta_q = np.asarray(delta_q, dtype=float)
    if delta_q.shape != modes.omega.shape:
        raise DomainError("one displacement coordinate per mode is required")
    spectrum = []
    for index, (energy, dq, is_zero) in enumerate(
        zip(modes.energies_meV, delta_q, modes.zero_mode)
    ):
        if is_zero:
            continue
        spectrum.append(
            PhononMode(
                energy_meV=float(energy),
                huang_rhys=huang_rhys_from_displacement(float(energy), float(dq)),
                label=f"{label_prefix}_{index}",
            )
        )
    return spectrum


def gaussian_push(
    lattice: ToyLattice, center: int, amplitude: float, width: float
) -> DisplacementField:
    """Radial outward push of amplitude * exp(-r^2 / 2 w^2) around a defect site."""
    if not 0 <= center < lattice.n_sites:
        raise DomainError(f"defect site {center} outside the lattice")
    if not width > 0:
        raise DomainError(f"push width must be positive, got {width}")
    delta = np.zeros((lattice.n_sites, lattice.dimension))
    for m in range(lattice.n_sites):
        if m == center:
            continue
        d = lattice.separation(center, m)
        r = float(np.linalg.norm(d))
        if r > 0:
            delta[m] = amplitude * math.exp(-(r * r) / (2.0 * width * width)) * d / r
    return DisplacementField(delta_R=delta.tolist())


def select_top_modes(spectrum: Sequence[PhononMode], k: int) -> List[PhononMode]:
    """The k modes with the largest S_k, returned in increasing energy."""
    if k < 1:
        raise DomainError(f"need at least one mode, got k={k}")
    ranked = sorted(spectrum, key=lambda mode: (-mode.huang_rhys, mode.energy_meV))
    return sorted(ranked[:k], key=lambda mode: mode.energy_meV)


def bin_modes(spectrum: Sequence[PhononMode], edges_meV: Sequence[float]) -> List[PhononMode]:
    """Collapse modes into energy bins: summed S_k at the S-weighted mean energy."""
    edges = np.asarray(edges_meV, dtype=float)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("bin edges must be strictly increasing with at least 2 entries")
    binned = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        members = [m for m in spectrum if lo <= m.energy_meV < hi]
        if not members:
            continue
        total = sum(m.huang_rhys for m in members)
        if total > 0:
            energy = sum(m.energy_meV * m.huang_rhys for m in members) / total
        else:
            energy = 0.5 * (lo + hi)
        binned.append(
            PhononMode(energy_meV=float(energy), huang_rhys=total, label=f"bin_{lo:g}_{hi:g}")
        )
    return binned


def monatomic_chain_dispersion(n_sites: int, mass: float, k: float) -> np.ndarray:
    """Sorted 2 sqrt(k/m) |sin(q a / 2)| over the allowed wavevectors of a ring."""
    qa = 2.0 * np.pi * np.arange(n_sites) / n_sites
    return np.sort(2.0 * np.sqrt(k / mass) * np.abs(np.sin(qa / 2.0)))


def diatomic_chain_dispersion(n_cells: int, mass_a: float, mass_b: float, k: float) -> np.ndarray:
    """Sorted acoustic and optical branches of a periodic diatomic ring."""
    qA = 2.0 * np.pi * np.arange(n_cells) / n_cells
    inverse = 1.0 / mass_a + 1.0 / mass_b
    s2 = np.sin(qA / 2.0) ** 2
    optical_sq = k * inverse + k * np.sqrt(inverse**2 - 4.0 * s2 / (mass_a * mass_b))
    # product of the roots avoids cancellation in the acoustic branch
    acoustic_sq = 4.0 * k * k * s2 / (mass_a * mass_b) / optical_sq
    return np.sort(np.concatenate([np.sqrt(acoustic_sq), np.sqrt(optical_sq)]))


def modes_table(modes: NormalModes, delta_q: Sequence[float]) -> pd.DataFrame:
    energies = modes.energies_meV
    delta_q = np.asarray(delta_q, dtype=float)
    s_k = [
        0.0 if zero else huang_rhys_from_displacement(float(e), float(dq))
        for e, dq, zero in zip(energies, delta_q, modes.zero_mode)
    ]
    return pd.DataFrame(
        {
            "mode_index": np.arange(len(modes)),
            "energy_meV": energies,
            "deltaQ": delta_q,
            "S_k": s_k,
        }
    )


def write_modes(path: Path, modes: NormalModes, delta_q: Sequence[float]) -> Path:
    return write_table(
        path,
        modes_table(modes, delta_q),
        schema="modes/v1",
        meta={"note": ILLUSTRATIVE_NOTE, "zero_modes": modes.n_zero_modes},
    )


def lattice_pipeline(
    lattice: ToyLattice, displacement: DisplacementField
) -> Tuple[NormalModes, np.ndarray, List[PhononMode]]:
    """Dynamical matrix -> modes -> dQ_k -> partial Huang-Rhys factors."""
    modes = solve_modes(build_dynamical_matrix(lattice))
    delta_q = project_displacement(modes, lattice, displacement)
    return modes, delta_q, huang_rhys_spectrum(modes, delta_q)
