"""Momentum-space Hamiltonians on truncated Fock bases.

Every momentum sum is truncated the same way: a term is kept iff all of its mode
indices belong to the basis (plus ``p = 0`` in the particle sector).  This shared
rule is what makes ``L0 + L2 + L3 + L4 = U H U^*`` hold exactly.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EmptyCutoffSet, WrongSector
from .fock import EXCITATION, PARTICLE, FockBasis, SparseOperator, operator, sqrt_depletion
from .scattering import Potential, fourier_V

log = logging.getLogger(__name__)

FOUR_PI2 = 4 * math.pi**2


class VhatTable:
    """``V^(2 pi m / N)`` for integer momenta ``m``, cached by ``|m|^2``."""

    def __init__(self, potential: Potential, N: int):
        self.potential = potential
        self.N = N
        self._cache: dict[int, float] = {}

    def __call__(self, m) -> float:
        m = np.asarray(m, dtype=np.int64)
        key = int(m @ m)
        if key not in self._cache:
            self._cache[key] = fourier_V(self.potential, 2 * math.pi * math.sqrt(key) / self.N)
        return self._cache[key]

    @property
    def at_zero(self) -> float:
        return self(np.zeros(3, dtype=np.int64))

    def table(self) -> dict[int, float]:
        return dict(sorted(self._cache.items()))


def _mode_lookup(basis: FockBasis) -> dict:
    return {tuple(int(c) for c in m): i for i, m in enumerate(basis.modes)}


def kinetic(basis: FockBasis) -> SparseOperator:
    """``K = sum_p p^2 a_p^* a_p`` (diagonal, exact)."""
    n2 = (basis.modes * basis.modes).sum(axis=1).astype(float)
    diag = basis.states.astype(float) @ (FOUR_PI2 * n2)
    return SparseOperator(basis, sp.diags(diag, format="csr"), hermitian=True, name="K")


def _quartic_terms(basis: FockBasis, vhat: VhatTable):
    """``(1/2N) V^(r/N) a*_{p+r} a*_q a_p a_{q+r}`` words with all indices in the basis."""
    lut = _mode_lookup(basis)
    modes = [tuple(int(c) for c in m) for m in basis.modes]
    N = basis.N
    terms, dropped = [], 0
    for i, p in enumerate(modes):
        for j, pr in enumerate(modes):
            r = tuple(a - b for a, b in zip(pr, p))
            coeff = vhat(r) / (2 * N)
            for k, q in enumerate(modes):
                l = lut.get(tuple(a + b for a, b in zip(q, r)))
                if l is None:
                    dropped += 1
                    continue
                terms.append((coeff, [("ad", j), ("ad", k), ("a", i), ("a", l)]))
    return terms, dropped


def build_HN(basis: FockBasis, vhat: VhatTable) -> SparseOperator:
    """``H_N = sum p^2 a*a + (1/2N) sum V^(r/N) a*_{p+r} a*_q a_p a_{q+r}`` on the particle sector."""
    if basis.sector != PARTICLE:
        raise WrongSector("H_N is built on the particle sector")
    terms, dropped = _quartic_terms(basis, vhat)
    if dropped:
        log.info("H_N: dropped %d interaction terms leaving the mode set", dropped)
    quartic = operator(basis, terms, name="V")
    m = kinetic(basis).matrix + quartic.matrix
    op = SparseOperator(basis, m, hermitian=True, name="H_N")
    op.meta["dropped_terms"] = dropped
    return op


def _need_excitation(basis: FockBasis):
    if basis.sector != EXCITATION:
        raise WrongSector("excitation Hamiltonians live on the excitation sector")


def build_L0(basis: FockBasis, vhat: VhatTable) -> SparseOperator:
    N, v0 = basis.N, vhat.at_zero
    n = basis.nplus.astype(float)
    diag = (N - 1) / (2 * N) * v0 * (N - n) + v0 / (2 * N) * n * (N - n)
    return SparseOperator(basis, sp.diags(diag, format="csr"), hermitian=True, name="L0")


def build_L2(basis: FockBasis, vhat: VhatTable) -> SparseOperator:
    lut = _mode_lookup(basis)
    N = basis.N
    g = sqrt_depletion(N)
    terms = []
    for i, p in enumerate(basis.modes):
        v = vhat(p)
        j = lut[tuple(int(c) for c in -p)]
        terms.append((v, [("ad", i), g, g, ("a", i)]))
        terms.append((-v / N, [("ad", i), ("a", i)]))
        terms.append((0.5 * v, [("ad", i), g, ("ad", j), g]))
        terms.append((0.5 * v, [g, ("a", i), g, ("a", j)]))
    m = kinetic(basis).matrix + operator(basis, terms).matrix
    return SparseOperator(basis, m, hermitian=True, name="L2")


def cubic_terms(basis: FockBasis, coeff_of_p, scale: float):
    """``scale * sum_{p,q} c(p) [b*_{p+q} a*_{-p} a_q + a*_q a_{-p} b_{p+q}]`` words."""
    lut = _mode_lookup(basis)
    g = sqrt_depletion(basis.N)
    terms, dropped = [], 0
    for p in basis.modes:
        c = coeff_of_p(p)
        if c == 0:
            continue
        ip = lut[tuple(int(x) for x in -p)]
        for iq, q in enumerate(basis.modes):
            s = p + q
            if not s.any():
                continue
            ipq = lut.get(tuple(int(x) for x in s))
            if ipq is None:
                dropped += 1
                continue
            terms.append((scale * c, [("ad", ipq), g, ("ad", ip), ("a", iq)]))
            terms.append((scale * c, [("ad", iq), ("a", ip), g, ("a", ipq)]))
    return terms, dropped


def build_L3(basis: FockBasis, vhat: VhatTable) -> SparseOperator:
    terms, dropped = cubic_terms(basis, vhat, 1 / math.sqrt(basis.N))
    if dropped:
        log.info("L3: dropped %d terms leaving the mode set", dropped)
    return operator(basis, terms, name="L3", hermitian=True)


def build_L4(basis: FockBasis, vhat: VhatTable) -> SparseOperator:
    terms, dropped = _quartic_terms(basis, vhat)
    if dropped:
        log.info("L4: dropped %d terms leaving the mode set", dropped)
    return operator(basis, terms, name="V_N", hermitian=True)


def build_L_pieces(basis: FockBasis, vhat: VhatTable) -> dict[str, SparseOperator]:
    _need_excitation(basis)
    return {
        "L0": build_L0(basis, vhat),
        "L2": build_L2(basis, vhat),
        "L3": build_L3(basis, vhat),
        "L4": build_L4(basis, vhat),
    }


def build_K_VN(basis: FockBasis, vhat: VhatTable) -> dict[str, SparseOperator]:
    _need_excitation(basis)
    return {"K": kinetic(basis), "V_N": build_L4(basis, vhat)}


def add(*ops: SparseOperator, name: str = "", hermitian: bool = True) -> SparseOperator:
    m = ops[0].matrix.copy()
    for o in ops[1:]:
        m = m + o.matrix
    return SparseOperator(ops[0].basis, m, hermitian=hermitian, name=name)


def build_Geff(basis: FockBasis, vhat: VhatTable, a0: float, high_mask, VN: SparseOperator | None = None, K: SparseOperator | None = None):
    """Pieces ``D_N, Q, C_N`` and their sum ``G_eff = D_N + K + Q + C_N + V_N``.

    ``high_mask`` flags the modes of ``P_H``; ``Q`` runs over the complement.
    """
    _need_excitation(basis)
    high = np.asarray(high_mask, dtype=bool)
    if not high.any():
        log.warning("P_H is empty on this lattice; Q covers every mode")
    N, v0 = basis.N, vhat.at_zero
    e = 4 * math.pi * a0
    n = basis.nplus.astype(float)
    D = SparseOperator(basis, sp.diags(e * (N - n) + (v0 - e) * n * (1 - n / N), format="csr"), hermitian=True, name="D_N")

    lut = _mode_lookup(basis)
    g = sqrt_depletion(N)
    terms = []
    for i, p in enumerate(basis.modes):
        if high[i]:
            continue
        j = lut[tuple(int(c) for c in -p)]
        terms.append((v0, [lambda x: 1 - x / N, ("ad", i), ("a", i)]))
        terms.append((e, [("ad", i), g, ("ad", j), g]))
        terms.append((e, [g, ("a", i), g, ("a", j)]))
    Q = operator(basis, terms, name="Q", hermitian=True)
    C = build_L3(basis, vhat)
    C.name = "C_N"
    K = K or kinetic(basis)
    VN = VN or build_L4(basis, vhat)
    G = add(D, K, Q, C, VN, name="G_eff")
    return {"G_eff": G, "D_N": D, "Q": Q, "C_N": C, "K": K, "V_N": VN}


@dataclass(eq=False)
class HamiltonianBundle:
    basis: FockBasis
    pieces: dict
    parameters: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.pieces[key]

    def manifest(self) -> dict:
        return {
            "dims": {k: list(v.shape) for k, v in sorted(self.pieces.items())},
            "nnz": {k: int(v.matrix.nnz) for k, v in sorted(self.pieces.items())},
            "parameters": self.parameters,
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n"


def build_bundle(exc: FockBasis, vhat: VhatTable, a0: float | None = None, high_mask=None, full: FockBasis | None = None, parameters=None) -> HamiltonianBundle:
    pieces = build_L_pieces(exc, vhat)
    pieces["K"] = kinetic(exc)
    pieces["V_N"] = pieces["L4"]
    pieces["H_N"] = add(pieces["K"], pieces["V_N"], name="H_N")
    pieces["L"] = add(*(pieces[k] for k in ("L0", "L2", "L3", "L4")), name="L_N")
    if full is not None:
        pieces["H_full"] = build_HN(full, vhat)
    if a0 is not None:
        if high_mask is None:
            raise EmptyCutoffSet("G_eff needs the high-momentum mask")
        pieces.update(build_Geff(exc, vhat, a0, high_mask, VN=pieces["V_N"], K=pieces["K"]))
    params = dict(parameters or {})
    params.setdefault("N", exc.N)
    params.setdefault("n_modes", exc.n_modes)
    params["vhat"] = {str(k): v for k, v in vhat.table().items()}
    return HamiltonianBundle(exc, pieces, params)
