import math

import pytest

from app.exceptions import CapacityError, DomainError
from app.physics.franck_condon import (
    displacement_from_huang_rhys,
    fc_overlap_sq,
    fc_table,
    huang_rhys_from_displacement,
    numeric_overlap_oracle,
    vibrational_energy,
)
from app.schema import PhononMode


def test_ground_to_ground_is_exp_minus_s():
    assert fc_overlap_sq(0.7, 0, 0) == pytest.approx(math.exp(-0.7), rel=1e-12)
    assert fc_overlap_sq(0.7, 0, 0) == pytest.approx(0.496585, abs=1e-6)


def test_undisplaced_oscillators_are_orthonormal():
    assert fc_overlap_sq(0.0, 2, 2) == 1.0
    assert fc_overlap_sq(0.0, 1, 2) == 0.0


def test_one_to_one_overlap():
    expected = math.exp(-0.5) * (0.5 - 1.0) ** 2
    assert fc_overlap_sq(0.5, 1, 1) == pytest.approx(expected, rel=1e-12)
    assert fc_overlap_sq(0.5, 1, 1) == pytest.approx(0.151633, abs=1e-6)


@pytest.mark.parametrize("n_e", range(8))
def test_poisson_progression_from_ground(n_e):
    S = 1.3
    expected = math.exp(-S) * S**n_e / math.factorial(n_e)
    assert fc_overlap_sq(S, 0, n_e) == pytest.approx(expected, rel=1e-12)


def test_symmetric_in_quanta():
    assert fc_overlap_sq(0.9, 3, 5) == pytest.approx(fc_overlap_sq(0.9, 5, 3), rel=1e-14)


@pytest.mark.parametrize("S", [0.0, 0.3, 0.7, 1.3, 2.0])
def test_analytic_matches_quadrature_oracle(S):
    for n_g in range(6):
        for n_e in range(6):
            assert fc_overlap_sq(S, n_g, n_e) == pytest.approx(
                numeric_overlap_oracle(S, n_g, n_e), abs=1e-8
            )


def test_oracle_examples():
    assert numeric_overlap_oracle(0.0, 0, 0) == pytest.approx(1.0, abs=1e-10)
    assert numeric_overlap_oracle(0.7, 0, 1) == pytest.approx(0.7 * math.exp(-0.7), abs=1e-8)
    assert numeric_overlap_oracle(1.3, 3, 2) == pytest.approx(fc_overlap_sq(1.3, 3, 2), abs=1e-8)


def test_oracle_rejects_large_quanta():
    with pytest.raises(CapacityError):
        numeric_overlap_oracle(0.5, 11, 0)


@pytest.mark.parametrize("S", [0.1, 0.7, 1.3, 2.0])
@pytest.mark.parametrize("n_g", [0, 1, 2, 3])
def test_completeness(S, n_g):
    total = sum(fc_overlap_sq(S, n_g, n_e) for n_e in range(n_g + 41))
    assert total == pytest.approx(1.0, abs=1e-6)


def test_values_stay_in_unit_interval_near_the_cap():
    for n_g, n_e in [(30, 30), (0, 60), (25, 35)]:
        value = fc_overlap_sq(4.0, n_g, n_e)
        assert 0.0 <= value <= 1.0


def test_invalid_arguments():
    with pytest.raises(DomainError):
        fc_overlap_sq(-0.1, 0, 0)
    with pytest.raises(DomainError):
        fc_overlap_sq(0.5, -1, 0)
    with pytest.raises(CapacityError) as excinfo:
        fc_overlap_sq(0.5, 40, 40)
    assert excinfo.value.suggestion


def test_fc_table_matches_pointwise_values():
    table = fc_table(0.8, 6)
    assert table.shape == (7, 7)
    assert table[2, 5] == pytest.approx(fc_overlap_sq(0.8, 2, 5), rel=1e-14)
    assert table[5, 2] == table[2, 5]
    assert not table.flags.writeable


def test_huang_rhys_from_displacement():
    assert huang_rhys_from_displacement(43.0, 0.0) == 0.0
    dq = displacement_from_huang_rhys(43.0, 0.3)
    assert huang_rhys_from_displacement(43.0, dq) == pytest.approx(0.3, rel=1e-12)
    with pytest.raises(DomainError):
        huang_rhys_from_displacement(0.0, 1.0)


def test_vibrational_energy():
    modes = [PhononMode(energy_meV=43.0, huang_rhys=0.3), PhononMode(energy_meV=9.0, huang_rhys=0.5)]
    assert vibrational_energy([0, 0], modes) == pytest.approx(26.0)
    assert vibrational_energy([1, 2], modes) == pytest.approx(43.0 * 1.5 + 9.0 * 2.5)
    with pytest.raises(DomainError):
        vibrational_energy([1], modes)
