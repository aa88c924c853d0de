"""Quadratic and cubic generators, their exponentials and the conjugated Hamiltonians."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConvergenceGuard, DimensionBudgetExceeded, EmptyCutoffSet, UnsupportedMode, WrongSector
from .fock import EXCITATION, FockBasis, SparseOperator, apply_word, b_word, momentum_blocks, operator, sqrt_depletion
from .linalg import expm_krylov

DENSE_DIM_MAX = 2000
KRYLOV_TOL = 1e-10
ETA_RADIUS_GUARD = 0.3


@dataclass(eq=False)
class Generator:
    """Anti-Hermitian generator ``B`` (quadratic) or ``A`` (cubic) with its dense blocks cached."""

    kind: str
    op: SparseOperator
    parameters: dict = field(default_factory=dict)
    dropped_terms: int = 0
    _dense: dict = field(default_factory=dict, repr=False)

    @property
    def basis(self) -> FockBasis:
        return self.op.basis

    @property
    def N(self) -> int:
        return self.op.basis.N

    @property
    def matrix(self) -> sp.csr_matrix:
        return self.op.matrix

    @property
    def is_zero(self) -> bool:
        return self.op.matrix.nnz == 0

    def blocks(self):
        if "blocks" not in self._dense:
            self._dense["blocks"] = momentum_blocks(self.basis)
        return self._dense["blocks"]

    def dense_exp(self, s: float = 1.0, dim_max: int = DENSE_DIM_MAX):
        """``[(idx, exp(s G)|block)]`` over momentum blocks, cached by ``s``."""
        key = ("exp", float(s))
        if key not in self._dense:
            out = []
            for idx in self.blocks():
                if len(idx) > dim_max:
                    raise DimensionBudgetExceeded(len(idx), dim_max, "dense exponential block")
                blk = self.matrix[idx][:, idx].toarray()
                out.append((idx, sla.expm(s * blk)))
            self._dense[key] = out
        return self._dense[key]


def zero_generator(basis: FockBasis, kind: str) -> Generator:
    m = sp.csr_matrix((basis.dim, basis.dim))
    return Generator(kind, SparseOperator(basis, m, anti_hermitian=True, name=kind))


def _aligned(basis: FockBasis, values) -> np.ndarray:
    """Coefficients aligned to ``basis.modes`` from an array or a ``{mode: value}`` map."""
    if isinstance(values, dict):
        out = np.zeros(basis.n_modes)
        for m, v in values.items():
            if v == 0:
                continue
            if not basis.has_mode(m):
                raise UnsupportedMode(f"eta is supported on {m}, which is not a basis mode")
            out[basis.mode_index(m)] = v
        return out
    values = np.asarray(values, dtype=float)
    if values.shape != (basis.n_modes,):
        raise UnsupportedMode("eta array does not match the basis modes")
    return values


def check_even(basis: FockBasis, eta: np.ndarray):
    neg = [basis.mode_index(-m) for m in basis.modes]
    if not np.array_equal(eta, eta[neg]):
        raise ValueError("eta must be even under p -> -p")


def build_B(basis: FockBasis, eta_H) -> Generator:
    """``B = 1/2 sum_p eta_p (b*_p b*_{-p} - b_p b_{-p})``."""
    if basis.sector != EXCITATION:
        raise WrongSector("B acts on the excitation sector")
    eta = _aligned(basis, eta_H)
    check_even(basis, eta)
    g = sqrt_depletion(basis.N)
    terms = []
    for i, (m, e) in enumerate(zip(basis.modes, eta)):
        if e == 0:
            continue
        j = basis.mode_index(-m)
        terms.append((0.5 * e, [("ad", i), g, ("ad", j), g]))
        terms.append((-0.5 * e, [g, ("a", i), g, ("a", j)]))
    op = operator(basis, terms, name="B", anti_hermitian=True)
    return Generator("quadratic_B", op, {"eta_norm": float(np.linalg.norm(eta))})


def build_A(basis: FockBasis, eta, high, low) -> Generator:
    """``A = N^-1/2 sum_{r in P_H, v in P_L} eta_r [b*_{r+v} a*_{-r} a_v - h.c.]``."""
    if basis.sector != EXCITATION:
        raise WrongSector("A acts on the excitation sector")
    eta = _aligned(basis, eta)
    high = np.asarray(high, dtype=bool)
    low = np.asarray(low, dtype=bool)
    if not high.any() or not low.any():
        raise EmptyCutoffSet("P_H and P_L must both meet the mode set")
    lut = {tuple(int(c) for c in m): i for i, m in enumerate(basis.modes)}
    g = sqrt_depletion(basis.N)
    c0 = 1 / math.sqrt(basis.N)
    terms, dropped = [], 0
    for ir in np.flatnonzero(high):
        e = eta[ir]
        if e == 0:
            continue
        r = basis.modes[ir]
        imr = lut[tuple(int(c) for c in -r)]
        for iv in np.flatnonzero(low):
            s = r + basis.modes[iv]
            irv = lut.get(tuple(int(c) for c in s))
            if irv is None:
                dropped += 1
                continue
            terms.append((c0 * e, [("ad", irv), g, ("ad", imr), ("a", iv)]))
            terms.append((-c0 * e, [("ad", iv), ("a", imr), g, ("a", irv)]))
    op = operator(basis, terms, name="A", anti_hermitian=True)
    params = {"n_high": int(high.sum()), "n_low": int(low.sum())}
    return Generator("cubic_A", op, params, dropped_terms=dropped)


def exp_apply(gen: Generator, state, s: float = 1.0, tol: float = KRYLOV_TOL, mode: str = "auto", dense_dim_max: int = DENSE_DIM_MAX):
    """``exp(s G) state`` by blockwise dense exponentials or the Krylov kernel."""
    state = np.asarray(state)
    if state.shape != (gen.basis.dim,):
        raise ValueError("state does not match the generator basis")
    if s == 0 or gen.is_zero:
        return state.copy()
    if mode == "auto":
        mode = "dense" if max(len(b) for b in gen.blocks()) <= dense_dim_max else "krylov"
    if mode == "dense":
        out = np.zeros_like(state, dtype=np.result_type(state, float))
        for idx, E in gen.dense_exp(s, dense_dim_max):
            out[idx] = E @ state[idx]
        return out
    if mode == "krylov":
        return expm_krylov(gen.matrix, state, s, tol)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(eq=False)
class ConjugationResult:
    """``e^{-G} X e^{G}``: a dense-block matrix, or a quadratic-form evaluator."""

    method: str
    tol: float
    basis: FockBasis
    matrix: sp.csr_matrix | None = None
    blocks: list | None = None
    evaluator: object = None
    hermiticity_error: float = 0.0

    def expectation(self, xi) -> float:
        if self.matrix is not None:
            return float(np.real(np.vdot(xi, self.matrix @ xi)))
        return self.evaluator(xi)


def conjugate(op, gen: Generator, mode: str = "dense", tol: float = KRYLOV_TOL, dense_dim_max: int = DENSE_DIM_MAX) -> ConjugationResult:
    """Conjugate a momentum-conserving Hermitian operator by ``e^{G}``."""
    X = op.matrix if isinstance(op, SparseOperator) else sp.csr_matrix(op)
    basis = gen.basis
    if mode == "dense":
        if gen.is_zero:
            return ConjugationResult("dense", tol, basis, X.copy(), None)
        blocks = []
        rows, cols, vals = [], [], []
        for idx, E in gen.dense_exp(1.0, dense_dim_max):
            xb = X[idx][:, idx].toarray()
            cb = E.conj().T @ xb @ E
            blocks.append((idx, cb))
            ii, jj = np.meshgrid(idx, idx, indexing="ij")
            rows.append(ii.ravel())
            cols.append(jj.ravel())
            vals.append(cb.ravel())
        m = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=X.shape)
        m.sort_indices()
        scale = max(abs(m).max(), 1e-300)
        herm = float(abs(m - m.conj().T).max() / scale)
        return ConjugationResult("dense", tol, basis, m, blocks, hermiticity_error=herm)
    if mode == "krylov":
        def evaluate(xi):
            y = exp_apply(gen, xi, 1.0, tol, mode="krylov")
            return float(np.real(np.vdot(y, X @ y)))

        return ConjugationResult("krylov", tol, basis, evaluator=evaluate)
    raise ValueError(f"unknown mode {mode!r}")


def _guard(eta: np.ndarray, radius: float):
    norm = float(np.linalg.norm(eta))
    if norm >= radius:
        raise ConvergenceGuard(f"||eta_H|| = {norm:.3g} exceeds the series radius {radius}")
    return norm


def b_apply(basis: FockBasis, p, dagger: bool, vec):
    r, c, v = apply_word(basis, b_word(basis, p, dagger))
    m = sp.csr_matrix((v, (r, c)), shape=(basis.dim, basis.dim))
    return m @ vec


def bogoliubov_remainder(basis: FockBasis, eta_H, p, state, B: Generator | None = None, radius: float = ETA_RADIUS_GUARD, corrected: bool = False, tol: float = KRYLOV_TOL):
    """``d_p xi = e^{-B} b_p e^{B} xi - cosh(eta_p) b_p xi - sinh(eta_p) b*_{-p} xi``.

    With ``corrected=True`` the term ``N^-1 sum_q eta_q b*_q a*_{-q} a_p xi`` is added.
    """
    eta = _aligned(basis, eta_H)
    _guard(eta, radius)
    B = B or build_B(basis, eta)
    p = np.asarray(p, dtype=np.int64)
    state = np.asarray(state, dtype=complex)
    ep = eta[basis.mode_index(p)]
    y = exp_apply(B, state, 1.0, tol)
    y = b_apply(basis, p, False, y)
    y = exp_apply(B, y, -1.0, tol)
    d = y - math.cosh(ep) * b_apply(basis, p, False, state) - math.sinh(ep) * b_apply(basis, -p, True, state)
    if corrected:
        d = d + correction_term(basis, eta, p) @ state
    return d


def correction_term(basis: FockBasis, eta: np.ndarray, p) -> sp.csr_matrix:
    """``N^-1 sum_q eta_q b*_q a*_{-q} a_p``."""
    ip = basis.mode_index(p)
    g = sqrt_depletion(basis.N)
    terms = []
    for iq, q in enumerate(basis.modes):
        if eta[iq] == 0:
            continue
        terms.append((eta[iq] / basis.N, [("ad", iq), g, ("ad", basis.mode_index(-q)), ("a", ip)]))
    return operator(basis, terms).matrix


def bch_partial_sums(basis: FockBasis, eta_H, p, m_max: int, state, B: Generator | None = None, radius: float = ETA_RADIUS_GUARD):
    """Partial sums ``sum_{n<=m} (-1)^n/n! ad_B^n(b_p) xi`` for ``m = 0..m_max``.

    ``ad_B^n(X) xi = sum_k C(n,k) (-1)^k B^{n-k} X B^k xi`` is evaluated with sparse
    matrix-vector products only.
    """
    eta = _aligned(basis, eta_H)
    _guard(eta, radius)
    B = B or build_B(basis, eta)
    Bm = B.matrix
    xi = np.asarray(state, dtype=complex)
    powers = [xi]
    for _ in range(m_max):
        powers.append(Bm @ powers[-1])
    bp = [b_apply(basis, p, False, v) for v in powers]
    sums, acc = [], np.zeros_like(xi)
    for n in range(m_max + 1):
        term = np.zeros_like(xi)
        for k in range(n + 1):
            y = bp[k]
            for _ in range(n - k):
                y = Bm @ y
            term = term + comb(n, k) * (-1) ** k * y
        acc = acc + (-1) ** n / factorial(n) * term
        sums.append(acc.copy())
    return sums


def random_state(basis: FockBasis, seed: int, max_nplus: int | None = None, complex_: bool = True) -> np.ndarray:
    """Fixed-seed Gaussian state, optionally supported on ``N_+ <= max_nplus``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(basis.dim) + (1j * rng.standard_normal(basis.dim) if complex_ else 0)
    if max_nplus is not None:
        v = np.where(basis.nplus <= max_nplus, v, 0)
    return v / np.linalg.norm(v)
