"""Low-lying spectra, one-particle density matrices and the energy/depletion observables."""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BoseGPError, DegeneracyWarning, EmptyWindow
from .fock import EXCITATION, PARTICLE, FockBasis, SparseOperator, apply_word, build_basis, lattice_modes
from .hamiltonians import VhatTable, build_HN
from .linalg import lanczos_lowest
from .scattering import Potential, zero_energy_scattering

log = logging.getLogger(__name__)


@dataclass(eq=False)
class SpectralResult:
    energies: np.ndarray
    states: np.ndarray
    residuals: np.ndarray
    n_plus: np.ndarray
    cluster_size: int
    N: int
    iterations: int = 0

    @property
    def n_plus_expectation(self) -> float:
        """``<N_+>`` averaged over the ground cluster (independent of the basis chosen in it)."""
        return float(np.mean(self.n_plus[: self.cluster_size]))

    @property
    def condensate_fraction(self) -> float:
        return (self.N - self.n_plus_expectation) / self.N

    @property
    def depletion(self) -> float:
        return 1.0 - self.condensate_fraction


def excitation_numbers(basis: FockBasis) -> np.ndarray:
    return basis.nplus.astype(float)


def _clusters(values: np.ndarray, tol: float) -> list[slice]:
    out, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > 10 * tol * max(1.0, abs(values[i])):
            out.append(slice(start, i))
            start = i
    return out


def ground_state(op: SparseOperator, k: int = 1, tol: float = 1e-10, max_iter: int = 20_000, seed: int = 0) -> SpectralResult:
    """``k`` lowest eigenpairs (extended to cover the whole ground cluster).

    Inside each degenerate cluster the eigenvectors are rotated to diagonalize
    ``N_+``, so the reported ``<N_+>`` values do not depend on the solver's basis.
    """
    if not op.hermitian:
        raise ValueError("ground_state needs a Hermitian operator")
    basis = op.basis
    dim = basis.dim
    need = min(k, dim)
    want = need
    while True:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegeneracyWarning)
            pairs = lanczos_lowest(op.matrix, dim, k=min(want + 1, dim), tol=tol, max_iter=max_iter, seed=seed)
        clusters = _clusters(pairs.values, tol)
        # the last cluster may continue past the computed values unless the spectrum is exhausted
        keep = clusters if pairs.values.size == dim else clusters[:-1]
        if keep and keep[-1].stop >= need:
            break
        want = clusters[-1].stop
    keep = keep[: next(i for i, c in enumerate(keep) if c.stop >= need) + 1]
    n = excitation_numbers(basis)
    stop = keep[-1].stop
    vals, vecs, res = pairs.values[:stop].copy(), pairs.vectors[:, :stop].copy(), pairs.residuals[:stop]
    nplus = np.empty(stop)
    for c in keep:
        block = vecs[:, c]
        M = block.conj().T @ (n[:, None] * block)
        w, U = np.linalg.eigh(0.5 * (M + M.conj().T))
        vecs[:, c] = block @ U
        nplus[c] = w
    if keep[0].stop > 1:
        warnings.warn(f"ground state is {keep[0].stop}-fold degenerate", DegeneracyWarning, stacklevel=2)
    return SpectralResult(vals, vecs, res, nplus, keep[0].stop, basis.N, pairs.iterations)


@dataclass(eq=False)
class DensityMatrix:
    modes: np.ndarray
    gamma: np.ndarray

    def occupation(self, m) -> float:
        i = int(np.flatnonzero((self.modes == np.asarray(m)).all(axis=1))[0])
        return float(np.real(self.gamma[i, i]))


def reduced_density(basis: FockBasis, state) -> DensityMatrix:
    """``gamma(p, q) = <a*_q a_p> / N`` over all modes of the basis."""
    psi = np.asarray(state, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    M = basis.n_modes
    gamma = np.zeros((M, M), dtype=complex)
    for i in range(M):
        for j in range(M):
            r, c, v = apply_word(basis, [("ad", j), ("a", i)])
            gamma[i, j] = np.vdot(psi[r], v * psi[c])
    total = basis.N if basis.sector == PARTICLE else max(np.real(np.trace(gamma)), 1e-300)
    return DensityMatrix(basis.modes.copy(), gamma / total)


@dataclass
class SweepRow:
    N: int
    dim: int
    E_N: float
    excess: float
    n_plus: float
    depletion_N: float
    status: str = "ok"
    runtime: float = 0.0

    def values(self):
        return [self.N, self.dim, self.E_N, self.excess, self.n_plus, self.depletion_N]


SWEEP_COLUMNS = ["N", "dim", "E_N", "E_N_minus_4pi_a0_N", "n_plus", "depletion_times_N"]


def particle_problem(potential: Potential, N: int, max_norm2: int, lattice_dim: int = 3, dim_max: int = 250_000):
    modes = lattice_modes(max_norm2, lattice_dim, include_zero=True)
    basis = build_basis(modes, N, PARTICLE, dim_max=dim_max)
    return basis, build_HN(basis, VhatTable(potential, N))


def energy_sweep(potential: Potential, N_grid, max_norm2: int, lattice_dim: int = 3, tol: float = 1e-10, seed: int = 0, dim_max: int = 250_000, max_iter: int = 20_000) -> list[SweepRow]:
    """Ground energy and depletion of ``H_N`` for every ``N``; failures are recorded per row."""
    a0 = zero_energy_scattering(potential)
    rows = []
    for N in N_grid:
        t0 = time.perf_counter()
        try:
            basis, H = particle_problem(potential, N, max_norm2, lattice_dim, dim_max)
            res = ground_state(H, 1, tol=tol, seed=seed, max_iter=max_iter) if basis.dim > 1 else None
            E = float(res.energies[0]) if res else float(H.matrix.diagonal()[0])
            npl = res.n_plus_expectation if res else 0.0
            rows.append(SweepRow(N, basis.dim, E, E - 4 * math.pi * a0 * N, npl, npl, "ok", time.perf_counter() - t0))
        except BoseGPError as exc:
            log.warning("sweep point N=%s failed: %s", N, exc)
            rows.append(SweepRow(N, 0, math.nan, math.nan, math.nan, math.nan, f"error: {type(exc).__name__}", time.perf_counter() - t0))
    return rows


@dataclass
class WindowRow:
    K: float
    n_states: int
    max_n_plus: float
    ratio: float


def depletion_vs_excess(op: SparseOperator, a0: float, K_grid=None, n_states: int = 6, tol: float = 1e-10, seed: int = 0) -> list[WindowRow]:
    """``max <N_+> / (K + 1)`` over eigenstates with ``E <= 4 pi a0 N + K``.

    Without ``K_grid`` the windows end at the top of each computed eigenvalue
    cluster, with ``K_j = max(E_j - 4 pi a0 N, 0)``.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegeneracyWarning)
        res = ground_state(op, n_states, tol=tol, seed=seed)
    ref = 4 * math.pi * a0 * op.basis.N
    E, npl = res.energies, res.n_plus
    if K_grid is None:
        K_grid = sorted({max(float(E[c.stop - 1]) - ref, 0.0) for c in _clusters(E, tol)})
    rows = []
    for K in K_grid:
        inside = E <= ref + K + tol * max(1.0, abs(ref + K))
        if not inside.any():
            raise EmptyWindow(f"no eigenstate below 4 pi a0 N + {K}")
        m = float(npl[inside].max())
        rows.append(WindowRow(float(K), int(inside.sum()), m, m / (K + 1)))
    return rows
