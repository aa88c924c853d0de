import math

import numpy as np
import pytest

from bosegp.errors import DegeneracyWarning, EmptyWindow
from bosegp.fock import PARTICLE, build_basis, lattice_modes
from bosegp.hamiltonians import VhatTable, build_HN, kinetic
from bosegp.scattering import Potential, fourier_V, zero_energy_scattering
from bosegp.spectra import (
    SWEEP_COLUMNS,
    depletion_vs_excess,
    energy_sweep,
    ground_state,
    particle_problem,
    reduced_density,
)


@pytest.fixture(scope="module")
def h3():
    well = Potential.square_well(12.5, 0.4)
    return particle_problem(well, 3, 1)


def test_kinetic_alone(exc3):
    res = ground_state(kinetic(exc3), 2)
    assert abs(res.energies[0]) <= 1e-12
    assert res.cluster_size == 1
    assert len(res.energies) == 7
    np.testing.assert_allclose(res.energies[1:], 4 * math.pi**2, rtol=1e-12)
    assert res.n_plus[0] == pytest.approx(0.0, abs=1e-10)


def test_zero_potential_ground_state(zero_potential):
    basis, H = particle_problem(zero_potential, 4, 1)
    res = ground_state(H, 1)
    assert abs(res.energies[0]) <= 1e-10
    assert res.n_plus_expectation == pytest.approx(0.0, abs=1e-10)
    assert res.condensate_fraction == pytest.approx(1.0)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_lanczos_matches_dense(well, N):
    basis, H = particle_problem(well, N, 1)
    assert basis.dim <= 500
    res = ground_state(H, 4)
    ref = np.linalg.eigvalsh(H.toarray())
    np.testing.assert_allclose(res.energies[:4], ref[:4], atol=1e-10)
    assert np.all(res.residuals <= 1e-10 * np.maximum(1, np.abs(res.energies)))


def test_ground_cluster_extension():
    from bosegp.fock import SparseOperator
    import scipy.sparse as sp

    basis = build_basis(lattice_modes(1, dim=1, include_zero=True), 2, PARTICLE)
    assert basis.dim == 6
    op = SparseOperator(basis, sp.csr_matrix(np.diag([0.0, 0.0, 0.0, 1.0, 1.0, 2.0])), hermitian=True)
    with pytest.warns(DegeneracyWarning):
        res = ground_state(op, 1)
    assert res.cluster_size == 3
    assert len(res.energies) == 3
    with pytest.warns(DegeneracyWarning):
        res = ground_state(op, 4)
    assert len(res.energies) == 5


def test_ground_state_rejects_non_hermitian(exc3):
    from bosegp.fock import b_ladder

    with pytest.raises(ValueError):
        ground_state(b_ladder(exc3, exc3.modes[0]), 1)


def test_energy_per_particle_below_mean_field(h3, well):
    basis, H = h3
    E = ground_state(H, 1).energies[0]
    assert E / 3 < 2 * fourier_V(well, 0.0) / (2 * 3)


def test_energy_monotone_under_mode_enlargement(well):
    energies = []
    for max_norm2, dim in [(1, 1), (1, 2), (1, 3), (2, 3)]:
        basis = build_basis(lattice_modes(max_norm2, dim, include_zero=True), 3, PARTICLE)
        energies.append(ground_state(build_HN(basis, VhatTable(well, 3)), 1).energies[0])
    assert all(b <= a + 1e-10 for a, b in zip(energies, energies[1:]))


def test_density_matrix_properties(h3):
    basis, H = h3
    res = ground_state(H, 1)
    dm = reduced_density(basis, res.states[:, 0])
    g = dm.gamma
    assert np.trace(g).real == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(g - g.conj().T)) <= 1e-12
    assert np.linalg.eigvalsh(g)[0] >= -1e-12
    zero_occ = dm.occupation((0, 0, 0))
    assert zero_occ == pytest.approx(res.condensate_fraction, abs=1e-10)
    assert np.max(np.abs(g - np.diag(np.diag(g)))) <= 1e-12


def test_density_matrix_of_condensate(full3):
    occ = [3 if not m.any() else 0 for m in full3.modes]
    psi = np.zeros(full3.dim)
    psi[full3.index_of(occ)] = 1.0
    dm = reduced_density(full3, psi)
    expect = np.zeros((full3.n_modes, full3.n_modes))
    i0 = full3.mode_index((0, 0, 0))
    expect[i0, i0] = 1.0
    np.testing.assert_allclose(dm.gamma, expect, atol=1e-15)


def test_windows(h3, well):
    basis, H = h3
    a0 = zero_energy_scattering(well)
    rows = depletion_vs_excess(H, a0, n_states=6)
    assert rows
    assert [r.K for r in rows] == sorted({r.K for r in rows})
    counts = [r.n_states for r in rows]
    assert counts == sorted(counts)
    for r in rows:
        assert r.ratio == pytest.approx(r.max_n_plus / (r.K + 1))
        assert 0 <= r.max_n_plus <= 3


def test_empty_window(h3):
    basis, H = h3
    with pytest.raises(EmptyWindow):
        depletion_vs_excess(H, -10.0, K_grid=[0.0])


def test_sweep_rows(well):
    rows = energy_sweep(well, [2, 3], 1)
    assert [r.N for r in rows] == [2, 3]
    assert len(rows[0].values()) == len(SWEEP_COLUMNS)
    a0 = zero_energy_scattering(well)
    for r in rows:
        assert r.status == "ok"
        assert r.excess == pytest.approx(r.E_N - 4 * math.pi * a0 * r.N)


def test_sweep_records_budget_failure(well):
    rows = energy_sweep(well, [2, 30], 1, dim_max=500)
    assert rows[0].status == "ok"
    assert rows[1].status.startswith("error") and math.isnan(rows[1].E_N)


def test_sweep_zero_potential(zero_potential):
    for r in energy_sweep(zero_potential, [2, 3, 4], 1):
        assert abs(r.E_N) <= 1e-10 and abs(r.n_plus) <= 1e-10
