import numpy as np
import pytest
import scipy.linalg as sla

from bosegp.bounds import growth_constant
from bosegp.config import RunConfig
from bosegp.errors import ConvergenceGuard, DimensionBudgetExceeded, EmptyCutoffSet, UnsupportedMode, WrongSector
from bosegp.fock import build_basis, lattice_modes, max_entry, number_operator
from bosegp.renorm import (
    b_apply,
    bch_partial_sums,
    bogoliubov_remainder,
    build_A,
    build_B,
    conjugate,
    exp_apply,
    random_state,
    zero_generator,
)
from bosegp.suites import excitation_problem


@pytest.fixture(scope="module")
def small():
    exc = build_basis(lattice_modes(1, dim=2), 4)
    eta = np.linspace(0.05, 0.05, exc.n_modes)
    return exc, eta


@pytest.fixture(scope="module")
def problems():
    cfg = RunConfig()
    return {N: excitation_problem(cfg, N, 2, 2) for N in (4, 6, 8)}


def test_zero_eta_gives_zero_generator(small):
    exc, _ = small
    B = build_B(exc, np.zeros(exc.n_modes))
    assert B.is_zero
    x = random_state(exc, 0)
    assert np.array_equal(exp_apply(B, x), x)
    assert zero_generator(exc, "quadratic_B").is_zero


def test_B_antihermitian_and_number_changing(small):
    exc, eta = small
    B = build_B(exc, eta).matrix
    assert max_entry(B + B.T.conj()) <= 1e-15
    r, c = B.nonzero()
    assert set(np.abs(exc.nplus[r] - exc.nplus[c])) == {2}


@pytest.mark.parametrize("s", [0.5, 1.0, -1.3])
def test_exp_unitary_and_group(small, s):
    exc, eta = small
    B = build_B(exc, eta)
    x = random_state(exc, 3)
    y = exp_apply(B, x, s)
    assert np.linalg.norm(y) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(exp_apply(B, y, 0.7), exp_apply(B, x, s + 0.7), atol=1e-12)
    np.testing.assert_allclose(exp_apply(B, y, -s), x, atol=1e-12)


def test_dense_vs_krylov(small):
    exc, eta = small
    B = build_B(exc, eta)
    x = random_state(exc, 5)
    dense = exp_apply(B, x, mode="dense")
    kry = exp_apply(B, x, mode="krylov", tol=1e-12)
    assert np.linalg.norm(dense - kry) <= 1e-9
    np.testing.assert_allclose(dense, sla.expm(B.matrix.toarray()) @ x, atol=1e-12)


def test_exp_apply_rejects_bad_input(small):
    exc, eta = small
    B = build_B(exc, eta)
    with pytest.raises(ValueError):
        exp_apply(B, np.ones(3))
    with pytest.raises(ValueError):
        exp_apply(B, random_state(exc, 0), mode="taylor")
    with pytest.raises(DimensionBudgetExceeded):
        build_B(exc, eta).dense_exp(1.0, dim_max=1)


def test_conjugation_lowers_vacuum_energy(problems):
    for N, pr in problems.items():
        B = build_B(pr.exc, pr.eta.eta_H)
        vac = pr.exc.vacuum()
        G = conjugate(pr.pieces["L"], B)
        L_vac = np.real(np.vdot(vac, pr.pieces["L"].matrix @ vac))
        assert G.expectation(vac) < L_vac, N
        assert G.hermiticity_error <= 1e-12


def test_conjugation_dense_vs_krylov(problems):
    pr = problems[4]
    B = build_B(pr.exc, pr.eta.eta_H)
    x = random_state(pr.exc, 1)
    dense = conjugate(pr.pieces["L"], B).expectation(x)
    kry = conjugate(pr.pieces["L"], B, mode="krylov", tol=1e-12).expectation(x)
    assert abs(dense - kry) <= 1e-9 * max(1, abs(dense))


def test_conjugation_preserves_spectrum(problems):
    pr = problems[4]
    B = build_B(pr.exc, pr.eta.eta_H)
    G = conjugate(pr.pieces["L"], B).matrix.toarray()
    np.testing.assert_allclose(np.linalg.eigvalsh(G), np.linalg.eigvalsh(pr.pieces["L"].toarray()), atol=1e-10)


def test_bch_low_orders(small):
    exc, eta = small
    B = build_B(exc, eta)
    p = exc.modes[0]
    x = random_state(exc, 2)
    sums = bch_partial_sums(exc, eta, p, 1, x, B=B)
    bx = b_apply(exc, p, False, x)
    np.testing.assert_allclose(sums[0], bx, atol=1e-14)
    comm = B.matrix @ bx - b_apply(exc, p, False, B.matrix @ x)
    np.testing.assert_allclose(sums[1], bx - comm, atol=1e-13)


def test_bch_converges_geometrically(small):
    exc, eta = small
    B = build_B(exc, eta)
    p = exc.modes[1]
    x = random_state(exc, 4)
    exact = exp_apply(B, b_apply(exc, p, False, exp_apply(B, x, 1.0)), -1.0)
    sums = bch_partial_sums(exc, eta, p, 10, x, B=B)
    errors = [np.linalg.norm(s - exact) for s in sums]
    assert errors[-1] <= 1e-12
    steps = [np.linalg.norm(b - a) for a, b in zip(sums, sums[1:])]
    ratios = [b / a for a, b in zip(steps, steps[1:]) if a > 1e-14]
    assert max(ratios) < 0.5


def test_remainder_guard(small):
    exc, _ = small
    with pytest.raises(ConvergenceGuard):
        bogoliubov_remainder(exc, np.full(exc.n_modes, 0.5), exc.modes[0], exc.vacuum())
    with pytest.raises(ConvergenceGuard):
        bch_partial_sums(exc, np.full(exc.n_modes, 0.5), exc.modes[0], 2, exc.vacuum())


def test_unsupported_and_uneven_eta(small):
    exc, _ = small
    with pytest.raises(UnsupportedMode):
        build_B(exc, {(5, 0, 0): 0.1, (-5, 0, 0): 0.1})
    with pytest.raises(UnsupportedMode):
        build_B(exc, np.zeros(exc.n_modes + 1))
    eta = np.zeros(exc.n_modes)
    eta[0] = 0.1
    with pytest.raises(ValueError, match="even"):
        build_B(exc, eta)


def test_eta_from_mapping_matches_array(small):
    exc, _ = small
    mapping = {(1, 0, 0): 0.1, (-1, 0, 0): 0.1}
    arr = np.zeros(exc.n_modes)
    arr[exc.mode_index((1, 0, 0))] = arr[exc.mode_index((-1, 0, 0))] = 0.1
    assert max_entry(build_B(exc, mapping).matrix - build_B(exc, arr).matrix) == 0.0


def test_generators_need_excitation_sector(full3):
    with pytest.raises(WrongSector):
        build_B(full3, np.zeros(full3.n_modes))
    with pytest.raises(WrongSector):
        build_A(full3, np.zeros(full3.n_modes), np.ones(full3.n_modes, bool), np.ones(full3.n_modes, bool))


def test_A_requires_both_cutoff_sets(small):
    exc, eta = small
    none = np.zeros(exc.n_modes, bool)
    with pytest.raises(EmptyCutoffSet):
        build_A(exc, eta, none, ~none)
    with pytest.raises(EmptyCutoffSet):
        build_A(exc, eta, ~none, none)


def test_A_structure(problems):
    pr = problems[6]
    A = build_A(pr.exc, pr.eta.eta, pr.eta.high, pr.eta.low)
    m = A.matrix
    assert m.nnz > 0
    assert max_entry(m + m.T.conj()) <= 1e-15
    r, c = m.nonzero()
    assert set(np.abs(pr.exc.nplus[r] - pr.exc.nplus[c])) == {1}
    assert A.op.momentum_violations() == 0
    assert A.dropped_terms > 0


def test_corrected_remainder_smaller():
    for N in (4, 8, 16):
        exc = build_basis(lattice_modes(1, dim=1), N)
        eta = np.full(exc.n_modes, 0.1)
        x = random_state(exc, 1)
        p = exc.modes[-1]
        plain = np.linalg.norm(bogoliubov_remainder(exc, eta, p, x))
        corr = np.linalg.norm(bogoliubov_remainder(exc, eta, p, x, corrected=True))
        assert corr < 0.7 * plain


@pytest.mark.parametrize("N", [10, 50])
def test_single_pair_remainder_is_small(N):
    exc = build_basis(lattice_modes(1, dim=1), N)
    eta = {(1, 0, 0): 0.1, (-1, 0, 0): 0.1}
    d = bogoliubov_remainder(exc, eta, (1, 0, 0), exc.vacuum())
    assert np.linalg.norm(d) <= 2.0 / N


def test_single_pair_remainder_shrinks_with_N():
    norms = []
    for N in (10, 20, 50):
        exc = build_basis(lattice_modes(1, dim=1), N)
        eta = {(1, 0, 0): 0.1, (-1, 0, 0): 0.1}
        norms.append(np.linalg.norm(bogoliubov_remainder(exc, eta, (1, 0, 0), exc.vacuum())))
    assert norms[0] > norms[1] > norms[2]


def test_A_growth_constant_flat(problems):
    values = []
    for pr in problems.values():
        A = build_A(pr.exc, pr.eta.eta, pr.eta.high, pr.eta.low)
        values.append(growth_constant(A, 1))
    assert max(values) / min(values) <= 1.2


def test_random_state_support(small):
    exc, _ = small
    x = random_state(exc, 0, max_nplus=1)
    assert np.linalg.norm(x) == pytest.approx(1.0)
    assert np.all(x[exc.nplus > 1] == 0)
    assert np.array_equal(random_state(exc, 0), random_state(exc, 0))
