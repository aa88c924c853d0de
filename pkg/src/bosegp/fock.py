"""Occupation-number bases, sparse second-quantized operators and the excitation map.

Momenta are integer vectors ``m`` with physical momentum ``p = 2*pi*m``.  All index
arithmetic is done on integers; floating point only enters matrix values.

Two kinds of basis are supported:

* ``EXCITATION`` -- the truncated excitation space: occupations of the nonzero
  modes with total at most ``N``.
* ``PARTICLE`` -- exactly ``N`` particles distributed over the modes including 0.

Operators are assembled from *words*: sequences of factors applied right to left,
each factor being ``("a", i)``, ``("ad", i)`` (mode column ``i``) or a callable
``g(n_plus) -> array`` acting diagonally on the current number of excitations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import (
    AsymmetricModeSet,
    DimensionBudgetExceeded,
    ModeMismatch,
    UnknownMode,
    WrongSector,
)

EXCITATION = "excitation_leq_N"
PARTICLE = "particle_exactly_N"

DEFAULT_DIM_MAX = 250_000
HERMITIAN_RTOL = 1e-12


def lattice_modes(max_norm2: int, dim: int = 3, include_zero: bool = False) -> np.ndarray:
    """Integer momenta ``m`` with ``0 < |m|^2 <= max_norm2`` in the first ``dim`` axes.

    Rows are sorted lexicographically on ``(m_x, m_y, m_z)``.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"lattice dimension must be 1, 2 or 3, got {dim}")
    r = int(math.isqrt(max_norm2))
    axes = [range(-r, r + 1)] * dim + [range(0, 1)] * (3 - dim)
    pts = [m for m in itertools.product(*axes) if sum(c * c for c in m) <= max_norm2]
    if not include_zero:
        pts = [m for m in pts if any(m)]
    return np.array(sorted(pts), dtype=np.int64).reshape(-1, 3)


def _sorted_modes(modes) -> np.ndarray:
    m = np.asarray(modes, dtype=np.int64).reshape(-1, 3)
    order = np.lexsort((m[:, 2], m[:, 1], m[:, 0]))
    return m[order]


@lru_cache(maxsize=None)
def _compositions(n_modes: int, total: int) -> np.ndarray:
    """All occupation vectors of ``n_modes`` summing to ``total``, descending lex order."""
    if n_modes == 0:
        return np.zeros((1 if total == 0 else 0, 0), dtype=np.int16)
    if n_modes == 1:
        return np.array([[total]], dtype=np.int16)
    blocks = []
    for k in range(total, -1, -1):
        tail = _compositions(n_modes - 1, total - k)
        head = np.full((tail.shape[0], 1), k, dtype=np.int16)
        blocks.append(np.hstack([head, tail]))
    out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def excitation_dimension(n_modes: int, N: int) -> int:
    return math.comb(n_modes + N, N)


@dataclass(frozen=True, eq=False)
class FockBasis:
    modes: np.ndarray
    N: int
    sector: str
    states: np.ndarray
    zero_index: int | None
    _weights: np.ndarray = field(repr=False)
    _sorted_keys: np.ndarray = field(repr=False)
    _key_order: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    @property
    def nonzero_columns(self) -> np.ndarray:
        cols = np.arange(self.n_modes)
        return cols if self.zero_index is None else np.delete(cols, self.zero_index)

    @property
    def nplus(self) -> np.ndarray:
        """Number of excitations (particles outside the zero mode) of every state."""
        return self.states[:, self.nonzero_columns].sum(axis=1).astype(np.int64)

    @property
    def total_momentum(self) -> np.ndarray:
        return self.states.astype(np.int64) @ self.modes

    def mode_index(self, m) -> int:
        m = np.asarray(m, dtype=np.int64).reshape(3)
        hit = np.flatnonzero((self.modes == m).all(axis=1))
        if hit.size == 0:
            raise UnknownMode(f"mode {tuple(m)} not in basis")
        return int(hit[0])

    def has_mode(self, m) -> bool:
        m = np.asarray(m, dtype=np.int64).reshape(3)
        return bool((self.modes == m).all(axis=1).any())

    def keys(self, occ: np.ndarray) -> np.ndarray:
        return occ.astype(np.int64) @ self._weights

    def lookup(self, occ: np.ndarray) -> np.ndarray:
        """Ordinals of occupation rows; raises if a row is not a basis state."""
        occ = np.atleast_2d(occ)
        keys = self.keys(occ)
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.minimum(pos, self.dim - 1)
        idx = self._key_order[pos]
        if not np.array_equal(self.states[idx], occ):
            raise KeyError("occupation vector outside the basis")
        return idx

    def index_of(self, occupation) -> int:
        return int(self.lookup(np.asarray(occupation, dtype=np.int16).reshape(1, -1))[0])

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    def same_as(self, other: "FockBasis") -> bool:
        return (
            self.sector == other.sector
            and self.N == other.N
            and np.array_equal(self.modes, other.modes)
        )


def _key_weights(n_modes: int, N: int) -> np.ndarray:
    if n_modes * math.log2(N + 1) < 62:
        return (N + 1) ** np.arange(n_modes, dtype=np.int64)
    # Radix encoding would overflow; lookups verify rows, so a random hash is safe.
    rng = np.random.default_rng(20190614)
    return rng.integers(1, 2**62, size=n_modes, dtype=np.int64) | 1


def build_basis(modes, N: int, sector: str = EXCITATION, dim_max: int = DEFAULT_DIM_MAX) -> FockBasis:
    """Enumerate the occupation basis of ``sector`` over ``modes``.

    States are ordered by number of excitations, then in descending lexicographic
    order of the excitation occupations (in mode order).
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    modes = _sorted_modes(modes)
    if len({tuple(m) for m in modes}) != len(modes):
        raise ValueError("duplicate modes")
    as_set = {tuple(m) for m in modes}
    if any(tuple(-m) not in as_set for m in modes):
        raise AsymmetricModeSet("mode set must be symmetric under m -> -m")
    has_zero = (0, 0, 0) in as_set
    if sector == EXCITATION and has_zero:
        raise ValueError("excitation basis must exclude the zero mode")
    if sector == PARTICLE and not has_zero:
        raise ValueError("particle basis must include the zero mode")
    if sector not in (EXCITATION, PARTICLE):
        raise ValueError(f"unknown sector {sector!r}")

    zero_index = None
    if has_zero:
        zero_index = int(np.flatnonzero((modes == 0).all(axis=1))[0])
    n_nonzero = len(modes) - int(has_zero)
    dim = excitation_dimension(n_nonzero, N)
    if dim > dim_max:
        raise DimensionBudgetExceeded(dim, dim_max)

    exc = np.vstack([_compositions(n_nonzero, n) for n in range(N + 1)]).astype(np.int16)
    if zero_index is not None:
        n0 = (N - exc.sum(axis=1, dtype=np.int64)).astype(np.int16)
        states = np.insert(exc, zero_index, n0, axis=1)
    else:
        states = exc
    states = np.ascontiguousarray(states)
    states.setflags(write=False)

    weights = _key_weights(len(modes), N)
    keys = states.astype(np.int64) @ weights
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    if np.any(np.diff(sorted_keys) == 0):
        raise RuntimeError("state key collision; enumeration is not duplicate-free")
    return FockBasis(modes, N, sector, states, zero_index, weights, sorted_keys, order)


def momentum_blocks(basis: FockBasis) -> list[np.ndarray]:
    """Basis ordinals grouped by total momentum, blocks ordered by that momentum."""
    P = basis.total_momentum
    _, inverse = np.unique(P, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    order = np.argsort(inverse, kind="stable")
    splits = np.flatnonzero(np.diff(inverse[order])) + 1
    return np.split(order, splits)


# ---------------------------------------------------------------------------
# word application


def apply_word(basis: FockBasis, word, coeff: complex = 1.0):
    """Matrix elements ``(rows, cols, vals)`` of ``coeff * word`` on ``basis``.

    Creation on a state that already holds ``N`` particles (excitation sector:
    ``N`` excitations) gives zero, which is the truncation every operator shares.
    """
    occ = basis.states.astype(np.int64)
    cols = np.arange(basis.dim)
    vals = np.full(basis.dim, coeff, dtype=float if np.isrealobj(coeff) else complex)
    nonzero = np.ones(basis.n_modes, dtype=bool)
    if basis.zero_index is not None:
        nonzero[basis.zero_index] = False
    nplus = basis.nplus.copy()
    total = occ.sum(axis=1)
    for factor in reversed(word):
        if callable(factor):
            vals = vals * factor(nplus)
            keep = vals != 0
        else:
            kind, i = factor
            n = occ[:, i]
            if kind == "a":
                keep = n > 0
                vals = vals * np.sqrt(n)
                delta = -1
            elif kind == "ad":
                keep = total < basis.N
                vals = vals * np.sqrt(n + 1)
                delta = 1
            else:
                raise ValueError(f"unknown factor {kind!r}")
        if not keep.all():
            occ, cols, vals, nplus, total = occ[keep], cols[keep], vals[keep], nplus[keep], total[keep]
        if cols.size == 0:
            break
        if not callable(factor):
            occ[:, i] += delta
            total = total + delta
            if nonzero[i]:
                nplus = nplus + delta
    if cols.size == 0:
        return np.zeros(0, dtype=np.int64), cols, vals
    rows = basis.lookup(occ)
    return rows, cols, vals


def word_transfer(basis: FockBasis, word) -> np.ndarray:
    t = np.zeros(3, dtype=np.int64)
    for factor in word:
        if not callable(factor):
            kind, i = factor
            t += basis.modes[i] if kind == "ad" else -basis.modes[i]
    return t


def _is_real(x) -> bool:
    return np.isrealobj(x) or np.iscomplexobj(x) and x.imag == 0


def assemble(basis: FockBasis, terms, dtype=float) -> sp.csr_matrix:
    """Sum of ``coeff * word`` over ``terms`` as a CSR matrix with sorted indices."""
    rows, cols, vals = [], [], []
    for coeff, word in terms:
        if coeff == 0:
            continue
        r, c, v = apply_word(basis, word, coeff)
        rows.append(r)
        cols.append(c)
        vals.append(v)
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals).astype(dtype)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0, dtype=dtype)
    m = sp.coo_matrix((v, (r, c)), shape=(basis.dim, basis.dim)).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


@dataclass(eq=False)
class SparseOperator:
    """A momentum-conserving operator on a Fock basis.

    ``domain`` is the basis of the columns when it differs from ``basis`` (only the
    excitation map uses this).  Flags are verified at construction.
    """

    basis: FockBasis
    matrix: sp.csr_matrix
    hermitian: bool = False
    anti_hermitian: bool = False
    transfer: tuple = (0, 0, 0)
    name: str = ""
    domain: FockBasis | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.matrix.sort_indices()
        if self.hermitian and hermiticity_error(self.matrix, +1) > 0:
            raise ValueError(f"operator {self.name!r} flagged Hermitian but is not")
        if self.anti_hermitian and hermiticity_error(self.matrix, -1) > 0:
            raise ValueError(f"operator {self.name!r} flagged anti-Hermitian but is not")

    @property
    def shape(self):
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            return self.matrix @ other.matrix
        return self.matrix @ other

    def momentum_violations(self) -> int:
        """Number of nonzero entries whose momentum change differs from ``transfer``."""
        coo = self.matrix.tocoo()
        dom = self.domain or self.basis
        d = self.basis.total_momentum[coo.row] - dom.total_momentum[coo.col]
        return int(np.count_nonzero((d != np.asarray(self.transfer)).any(axis=1)))


def hermiticity_error(m, sign: int = +1) -> float:
    """``max|M - sign*M^H|`` relative to ``max|M|``; 0 when within 1e-12."""
    scale = abs(m).max() if m.nnz else 0.0
    if scale == 0:
        return 0.0
    diff = m - sign * m.conj().T
    err = abs(diff).max() if diff.nnz else 0.0
    return 0.0 if err <= HERMITIAN_RTOL * scale else float(err / scale)


def operator(basis: FockBasis, terms, name: str = "", hermitian=False, anti_hermitian=False, transfer=(0, 0, 0)):
    terms = list(terms)
    m = assemble(basis, terms)
    return SparseOperator(basis, m, hermitian, anti_hermitian, tuple(int(t) for t in transfer), name)


def _require_excitation(basis: FockBasis, what: str):
    if basis.sector != EXCITATION:
        raise WrongSector(f"{what} acts on the excitation sector only")


def sqrt_depletion(N: int):
    """Diagonal factor ``sqrt((N - N_+)/N)`` of the modified operators."""
    return lambda n: np.sqrt(np.maximum(N - n, 0) / N)


def b_word(basis: FockBasis, p, dagger: bool):
    i = basis.mode_index(p)
    g = sqrt_depletion(basis.N)
    return [("ad", i), g] if dagger else [g, ("a", i)]


def ladder(basis: FockBasis, p, kind: str = "a") -> SparseOperator:
    """``a_p`` or ``a_p^*`` on the excitation sector."""
    _require_excitation(basis, "ladder")
    i = basis.mode_index(p)
    if kind not in ("a", "a_dag"):
        raise ValueError("kind must be 'a' or 'a_dag'")
    dag = kind == "a_dag"
    t = basis.modes[i] if dag else -basis.modes[i]
    return operator(basis, [(1.0, [("ad" if dag else "a", i)])], name=f"{kind}{tuple(basis.modes[i])}", transfer=t)


def b_ladder(basis: FockBasis, p, kind: str = "b") -> SparseOperator:
    """Modified operators ``b_p = sqrt((N-N_+)/N) a_p`` and ``b_p^* = a_p^* sqrt((N-N_+)/N)``."""
    _require_excitation(basis, "b_ladder")
    if basis.N == 0:
        raise ValueError("b operators need N >= 1")
    if kind not in ("b", "b_dag"):
        raise ValueError("kind must be 'b' or 'b_dag'")
    dag = kind == "b_dag"
    i = basis.mode_index(p)
    t = basis.modes[i] if dag else -basis.modes[i]
    return operator(basis, [(1.0, b_word(basis, p, dag))], name=f"{kind}{tuple(basis.modes[i])}", transfer=t)


def hopping(basis: FockBasis, p, q) -> SparseOperator:
    """``a_p^* a_q``; defined on both sectors (including the zero mode when present)."""
    i, j = basis.mode_index(p), basis.mode_index(q)
    t = basis.modes[i] - basis.modes[j]
    return operator(basis, [(1.0, [("ad", i), ("a", j)])], name=f"hop{tuple(basis.modes[i])}{tuple(basis.modes[j])}", transfer=t)


def number_operator(basis: FockBasis, subset=None) -> SparseOperator:
    """Diagonal ``sum_{p in subset} n_p``; default subset is all nonzero modes (N_+)."""
    if subset is None:
        cols = basis.nonzero_columns
    else:
        cols = np.array([basis.mode_index(p) for p in np.asarray(subset).reshape(-1, 3)], dtype=np.int64)
    diag = basis.states[:, cols].sum(axis=1).astype(float)
    return SparseOperator(basis, sp.diags(diag, format="csr"), hermitian=True, name="N_plus" if subset is None else "N_subset")


def diagonal(basis: FockBasis, values, name="") -> SparseOperator:
    return SparseOperator(basis, sp.diags(np.asarray(values, dtype=float), format="csr"), hermitian=True, name=name)


def u_map(full: FockBasis, exc: FockBasis) -> SparseOperator:
    """The excitation map as a (exc.dim x full.dim) matrix: ``|n_0, n_+> -> |n_+>``."""
    if full.sector != PARTICLE or exc.sector != EXCITATION:
        raise ModeMismatch("u_map needs a particle basis and an excitation basis")
    if full.N != exc.N:
        raise ModeMismatch("bases have different N")
    nz = full.nonzero_columns
    if not np.array_equal(full.modes[nz], exc.modes):
        raise ModeMismatch("excitation modes must equal the particle modes minus zero")
    rows = exc.lookup(full.states[:, nz])
    cols = np.arange(full.dim)
    m = sp.csr_matrix((np.ones(full.dim), (rows, cols)), shape=(exc.dim, full.dim))
    return SparseOperator(exc, m, name="U_N", domain=full)


def conjugate_by_u(U: SparseOperator, op) -> sp.csr_matrix:
    """``U op U^*`` as a sparse matrix on the excitation basis."""
    m = op.matrix if isinstance(op, SparseOperator) else op
    out = (U.matrix @ m @ U.matrix.T).tocsr()
    out.sort_indices()
    return out


def commutator(x, y):
    return x @ y - y @ x


def max_entry(m) -> float:
    if sp.issparse(m):
        return float(abs(m).max()) if m.nnz else 0.0
    m = np.asarray(m)
    return float(np.abs(m).max()) if m.size else 0.0


# ---------------------------------------------------------------------------
# coordinate-triplet export


def write_triplets(op: SparseOperator, path) -> Path:
    """Write ``row col re im`` lines preceded by ``#`` header lines."""
    path = Path(path)
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    vals = coo.data[order].astype(complex)
    with path.open("w") as fh:
        fh.write(f"# operator: {op.name}\n")
        fh.write(f"# sector: {op.basis.sector}\n# N: {op.basis.N}\n# dim: {op.shape[0]} {op.shape[1]}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], vals):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")
    return path


def read_triplets(path):
    """Return ``(header, matrix)`` from a triplet file."""
    header = {}
    rows, cols, vals = [], [], []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                header[key.strip()] = value.strip()
                continue
            r, c, re, im = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(re) + 1j * float(im))
    shape = tuple(int(x) for x in header["dim"].split())
    v = np.array(vals, dtype=complex)
    if v.size and not np.any(v.imag):
        v = v.real
    return header, sp.csr_matrix((v, (rows, cols)), shape=shape)
