import numpy as np
import pytest

from app.exceptions import InstabilityError, StructuralError
from app.physics.franck_condon import huang_rhys_from_displacement
from app.physics.lattice import (
    DisplacementField,
    NormalModes,
    Spring,
    ToyLattice,
    bin_modes,
    build_dynamical_matrix,
    diatomic_chain_dispersion,
    gaussian_push,
    huang_rhys_spectrum,
    lattice_pipeline,
    monatomic_chain_dispersion,
    project_displacement,
    select_top_modes,
    solve_modes,
    write_modes,
)
from app.schema import PhononMode


@pytest.fixture(scope="module")
def chain64():
    lattice = ToyLattice.monatomic_chain(64, mass=12.0, k=3.0)
    return lattice, solve_modes(build_dynamical_matrix(lattice))


def test_two_mass_spring_matrix():
    lattice = ToyLattice(
        dimension=1,
        masses=[2.0, 2.0],
        equilibrium_positions_g=[[0.0], [1.5]],
        springs=[Spring(i=0, j=1, k=4.0)],
    )
    D = build_dynamical_matrix(lattice)
    assert D == pytest.approx(np.array([[2.0, -2.0], [-2.0, 2.0]]), abs=1e-15)


def test_random_lattice_matrix_is_symmetric():
    rng = np.random.default_rng(3)
    n = 6
    positions = rng.uniform(0.0, 5.0, size=(n, 3))
    springs = [Spring(i=i, j=i + 1, k=float(rng.uniform(0.5, 3.0)), k_t=0.2) for i in range(n - 1)]
    springs.append(Spring(i=0, j=n - 1, k=1.0))
    lattice = ToyLattice(
        dimension=3,
        masses=rng.uniform(1.0, 20.0, n).tolist(),
        equilibrium_positions_g=positions.tolist(),
        springs=springs,
    )
    D = build_dynamical_matrix(lattice)
    assert np.max(np.abs(D - D.T)) < 1e-12


def test_acoustic_sum_rule_for_periodic_chain():
    lattice = ToyLattice.monatomic_chain(10, mass=1.0, k=2.0)
    D = build_dynamical_matrix(lattice)
    assert np.abs(D.sum(axis=1)).max() < 1e-12


def test_disconnected_lattice_rejected():
    lattice = ToyLattice(
        dimension=1,
        masses=[1.0, 1.0, 1.0, 1.0],
        equilibrium_positions_g=[[0.0], [1.0], [2.0], [3.0]],
        springs=[Spring(i=0, j=1, k=1.0), Spring(i=2, j=3, k=1.0)],
    )
    with pytest.raises(StructuralError):
        build_dynamical_matrix(lattice)


def test_monatomic_dispersion_oracle(chain64):
    lattice, modes = chain64
    oracle = monatomic_chain_dispersion(64, 12.0, 3.0)
    assert np.max(np.abs(modes.omega - oracle)) < 1e-8


def test_periodic_chain_has_one_zero_mode(chain64):
    _, modes = chain64
    assert modes.n_zero_modes == 1
    assert modes.omega[0] == 0.0


def test_eigenvectors_orthonormal(chain64):
    _, modes = chain64
    gram = modes.eigenvectors.T @ modes.eigenvectors
    assert np.max(np.abs(gram - np.eye(len(modes)))) < 1e-10


def test_diatomic_dispersion_oracle():
    lattice = ToyLattice.diatomic_chain(16, mass_a=12.0, mass_b=28.0, k=2.5)
    modes = solve_modes(build_dynamical_matrix(lattice))
    oracle = diatomic_chain_dispersion(16, 12.0, 28.0, 2.5)
    assert np.max(np.abs(modes.omega - oracle)) < 1e-8
    assert modes.n_zero_modes == 1


def test_square_lattice_zero_modes_match_dimension():
    lattice = ToyLattice.square_lattice(4, 4, mass=12.0, k=3.0, k_t=0.5)
    modes = solve_modes(build_dynamical_matrix(lattice))
    assert modes.n_zero_modes == 2


def test_instability_error_reports_eigenvalue():
    D = np.array([[1.0, 0.0], [0.0, -0.5]])
    with pytest.raises(InstabilityError) as excinfo:
        solve_modes(D)
    assert excinfo.value.eigenvalue == pytest.approx(-0.5)


def test_mass_scaling(chain64):
    lattice, modes = chain64
    heavy = ToyLattice.monatomic_chain(64, mass=12.0 * 4.0, k=3.0)
    heavy_modes = solve_modes(build_dynamical_matrix(heavy))
    assert np.max(np.abs(heavy_modes.omega - modes.omega / 2.0)) < 1e-10
    gram = heavy_modes.eigenvectors.T @ heavy_modes.eigenvectors
    assert np.max(np.abs(gram - np.eye(len(heavy_modes)))) < 1e-10


def test_uniform_translation_projects_on_zero_mode(chain64):
    lattice, modes = chain64
    shift = DisplacementField(delta_R=[[0.05]] * lattice.n_sites)
    dq = project_displacement(modes, lattice, shift)
    assert np.max(np.abs(dq[~modes.zero_mode])) < 1e-12
    assert abs(dq[modes.zero_mode][0]) > 0


def test_single_mode_displacement(chain64):
    lattice, modes = chain64
    j, amplitude = 17, 0.02
    pattern = amplitude * modes.eigenvectors[:, j] / np.sqrt(np.asarray(lattice.masses))
    dq = project_displacement(modes, lattice, DisplacementField(delta_R=pattern[:, None].tolist()))
    expected = np.zeros(len(modes))
    expected[j] = amplitude
    assert dq == pytest.approx(expected, abs=1e-12)

    spectrum = huang_rhys_spectrum(modes, dq)
    nonzero = [mode for mode in spectrum if mode.huang_rhys > 1e-20]
    assert len(nonzero) == 1
    assert nonzero[0].huang_rhys == pytest.approx(
        huang_rhys_from_displacement(float(modes.energies_meV[j]), amplitude), rel=1e-10
    )


def test_parseval_identity(chain64):
    lattice, modes = chain64
    delta = np.random.default_rng(11).normal(scale=0.01, size=(lattice.n_sites, 1))
    dq = project_displacement(modes, lattice, DisplacementField(delta_R=delta.tolist()))
    weighted = float(np.sum(np.asarray(lattice.masses)[:, None] * delta**2))
    assert float(np.sum(dq**2)) == pytest.approx(weighted, rel=1e-10)


def test_zero_displacement_gives_zero_coupling(chain64):
    lattice, modes = chain64
    dq = project_displacement(
        modes, lattice, DisplacementField(delta_R=[[0.0]] * lattice.n_sites)
    )
    spectrum = huang_rhys_spectrum(modes, dq)
    assert len(spectrum) == len(modes) - modes.n_zero_modes
    assert all(mode.huang_rhys == 0.0 for mode in spectrum)


def test_total_huang_rhys_invariant_under_degenerate_rebasing():
    lattice = ToyLattice.square_lattice(4, 4, mass=12.0, k=3.0, k_t=0.5)
    modes = solve_modes(build_dynamical_matrix(lattice))
    push = gaussian_push(lattice, center=5, amplitude=0.02, width=1.2)
    total = sum(m.huang_rhys for m in huang_rhys_spectrum(modes, project_displacement(modes, lattice, push)))

    rng = np.random.default_rng(5)
    vectors = modes.eigenvectors.copy()
    eigenvalues = modes.eigenvalues
    start = 0
    while start < len(eigenvalues):
        stop = start + 1
        while stop < len(eigenvalues) and abs(eigenvalues[stop] - eigenvalues[start]) < 1e-9:
            stop += 1
        if stop - start > 1:
            q, _ = np.linalg.qr(rng.normal(size=(stop - start, stop - start)))
            vectors[:, start:stop] = vectors[:, start:stop] @ q
        start = stop
    rebased = NormalModes(
        eigenvalues=eigenvalues, omega=modes.omega, eigenvectors=vectors, zero_mode=modes.zero_mode
    )
    rebased_total = sum(
        m.huang_rhys for m in huang_rhys_spectrum(rebased, project_displacement(rebased, lattice, push))
    )
    assert rebased_total == pytest.approx(total, rel=1e-10)


def test_select_and_bin_modes():
    spectrum = [
        PhononMode(energy_meV=10.0, huang_rhys=0.1),
        PhononMode(energy_meV=12.0, huang_rhys=0.3),
        PhononMode(energy_meV=40.0, huang_rhys=0.2),
        PhononMode(energy_meV=45.0, huang_rhys=0.05),
    ]
    top = select_top_modes(spectrum, 2)
    assert [m.energy_meV for m in top] == [12.0, 40.0]

    binned = bin_modes(spectrum, [0.0, 20.0, 50.0])
    assert [m.huang_rhys for m in binned] == pytest.approx([0.4, 0.25])
    assert binned[0].energy_meV == pytest.approx((10.0 * 0.1 + 12.0 * 0.3) / 0.4)


def test_pipeline_and_modes_file(tmp_path):
    lattice = ToyLattice.monatomic_chain(16, mass=12.0, k=3.0)
    push = gaussian_push(lattice, center=0, amplitude=0.02, width=1.5)
    modes, dq, spectrum = lattice_pipeline(lattice, push)
    assert len(spectrum) == 15
    assert all(mode.huang_rhys >= 0 for mode in spectrum)

    path = write_modes(tmp_path / "modes.csv", modes, dq)
    text = path.read_text(encoding="utf-8")
    assert text.startswith("# schema=modes/v1\n")
    assert "illustrative" in text
    assert "mode_index,energy_meV,deltaQ,S_k" in text
