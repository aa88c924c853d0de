"""Numerical verdicts for operator identities and inequalities.

An inequality ``X + C W >= 0`` with ``W > 0`` is decided exactly at the given
truncation: the smallest admissible constant is ``C = max(0, -mu_min)`` where
``mu_min`` is the lowest generalized eigenvalue of the pencil ``(X, W)``.  Each
fitted constant is stored with a bracket certificate, i.e. ``lambda_min(X + C W)``
evaluated just below and just above ``C``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConfigError, PartitionViolation
from .fock import FockBasis, SparseOperator, momentum_blocks
from .renorm import Generator, conjugate

EXACT_TOL = 1e-10
PSD_TOL = 1e-10

EXACT_PASS = "exact_pass"
FITTED_PASS = "fitted_pass"
FAIL = "fail"


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class BoundReport:
    name: str
    parameters: dict = field(default_factory=dict)
    fitted_constants: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    slope_estimates: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)
    verdict: str = FAIL
    samples_used: int = 0
    notes: str = ""

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def passed(self) -> bool:
        return self.verdict != FAIL


def blocks_of(basis: FockBasis):
    return momentum_blocks(basis)


def _block(m, idx) -> np.ndarray:
    if sp.issparse(m):
        return m[idx][:, idx].toarray()
    return np.asarray(m)[np.ix_(idx, idx)]


def lambda_min(X, blocks) -> float:
    return min(float(np.linalg.eigvalsh(_block(X, idx))[0]) for idx in blocks)


def fit_constant(X, W, blocks, tol: float = PSD_TOL):
    """Smallest ``C >= 0`` with ``X + C W >= -tol`` and its bracket certificate."""
    mu = math.inf
    for idx in blocks:
        xb, wb = _block(X, idx), _block(W, idx)
        xb = 0.5 * (xb + xb.conj().T)
        wb = 0.5 * (wb + wb.conj().T)
        mu = min(mu, float(sla.eigh(xb, wb, eigvals_only=True)[0]))
    C = max(0.0, -mu)
    hi = C * (1 + 1e-7) + 1e-14
    cert = {"C_high": hi, "lambda_high": lambda_min(X + hi * W, blocks)}
    if C > 0:
        lo = C * (1 - 1e-3)
        cert.update({"C_low": lo, "lambda_low": lambda_min(X + lo * W, blocks)})
    else:
        cert.update({"C_low": None, "lambda_low": None})
    cert["valid"] = bool(cert["lambda_high"] >= -tol and (C == 0 or cert["lambda_low"] < -tol))
    return C, cert


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def stability_factor(values) -> float:
    v = np.abs(np.asarray(list(values), dtype=float))
    if np.all(v == 0):
        return 1.0
    if np.any(v == 0):
        return math.inf
    return float(v.max() / v.min())


def _diag(values) -> sp.csr_matrix:
    return sp.diags(np.asarray(values, dtype=float), format="csr")


def max_entry(m) -> float:
    if sp.issparse(m):
        return float(abs(m).max()) if m.nnz else 0.0
    return float(np.max(np.abs(m))) if np.size(m) else 0.0


# ---------------------------------------------------------------------------


def verify_theta_bound(L: SparseOperator, B: Generator, K: SparseOperator, V_N: SparseOperator, a0: float, delta_grid, ell: float, alpha: float) -> BoundReport:
    """Fitted constants for ``+-theta <= delta H + C ell^-alpha (N_+ + 1)`` and the lower variant."""
    basis = L.basis
    N = basis.N
    G = conjugate(L, B, "dense").matrix
    H = (K.matrix + V_N.matrix).tocsr()
    ref = 4 * math.pi * a0 * N
    theta = (G - ref * sp.identity(basis.dim, format="csr") - H).tocsr()
    n = basis.nplus.astype(float)
    blocks = blocks_of(basis)
    W_pm = _diag(ell**-alpha * (n + 1))
    W_err = _diag(n + ell**-alpha)
    consts, certs = {}, {}
    for d in delta_grid:
        c_plus, cert_p = fit_constant(d * H - theta, W_pm, blocks)
        c_minus, cert_m = fit_constant(d * H + theta, W_pm, blocks)
        c_err, cert_e = fit_constant(d * H + theta, W_err, blocks)
        key = f"{d:g}"
        consts[f"C_pm[{key}]"] = max(c_plus, c_minus)
        consts[f"C_err[{key}]"] = c_err
        certs[f"pm_upper[{key}]"] = cert_p
        certs[f"pm_lower[{key}]"] = cert_m
        certs[f"err[{key}]"] = cert_e
    vac = 0
    residuals = {
        "theta_hermiticity": max_entry(theta - theta.T.conj()),
        "vacuum_identity": abs(theta[vac, vac] - (G[vac, vac] - ref)),
    }
    exact_ok = all(v <= EXACT_TOL * max(1.0, max_entry(G)) for v in residuals.values())
    certs_ok = all(c["valid"] for c in certs.values())
    verdict = EXACT_PASS if exact_ok and certs_ok else FAIL
    params = {"N": N, "ell": ell, "alpha": alpha, "a0": a0, "delta_grid": list(delta_grid), "dim": basis.dim}
    rep = BoundReport("theta_bound", params, consts, residuals, {}, certs, verdict, basis.dim)
    rep.parameters["theta_vacuum"] = float(theta[vac, vac])
    return rep


def smooth_step(x):
    """C-infinity transition from 0 (x <= 0) to 1 (x >= 1)."""
    x = np.asarray(x, dtype=float)

    def psi(t):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)

    a, b = psi(x), psi(1 - x)
    return a / (a + b)


def partition_f(x):
    return np.cos(0.5 * math.pi * smooth_step(x))


def partition_g(x):
    return np.sqrt(np.maximum(0.0, 1 - partition_f(x) ** 2))


def derivative_sup(func, lo: float = -0.5, hi: float = 1.5, n: int = 200_001) -> float:
    x = np.linspace(lo, hi, n)
    return float(np.max(np.abs(np.gradient(func(x), x))))


def localization_pieces(G, basis: FockBasis, M: int, f=partition_f, g=partition_g):
    n = basis.nplus.astype(float)
    fv, gv = f(n / M), g(n / M)
    if np.max(np.abs(fv**2 + gv**2 - 1)) > 1e-12:
        raise PartitionViolation("f^2 + g^2 != 1 on the integer lattice")
    F, Gm = _diag(fv), _diag(gv)
    X = G if sp.issparse(G) else sp.csr_matrix(G)

    def dc(D):
        c = D @ X - X @ D
        return D @ c - c @ D

    E = 0.5 * (dc(F) + dc(Gm))
    return F @ X @ F + Gm @ X @ Gm, E


def weighted_norm(E, H, blocks) -> float:
    """``||(H+1)^{-1/2} E (H+1)^{-1/2}||`` blockwise (H positive semidefinite)."""
    best = 0.0
    for idx in blocks:
        e, hb = _block(E, idx), _block(H, idx)
        w, U = np.linalg.eigh(0.5 * (hb + hb.T))
        s = U / np.sqrt(np.maximum(w, 0) + 1)[None, :]
        m = s.conj().T @ e @ s
        best = max(best, float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T))))))
    return best


def verify_localization(G, H: SparseOperator, M_list=(2, 4, 8), f=partition_f, g=partition_g, basis: FockBasis | None = None) -> BoundReport:
    """Exact localization identity for each ``M`` and the ``M^-2`` decay of its commutator term."""
    basis = basis or H.basis
    Gm = G.matrix if isinstance(G, SparseOperator) else sp.csr_matrix(G)
    blocks = blocks_of(basis)
    residuals, mags = {}, {}
    for M in M_list:
        loc, E = localization_pieces(Gm, basis, M, f, g)
        residuals[f"identity[M={M}]"] = max_entry(Gm - loc - E)
        mags[M] = weighted_norm(E, H.matrix, blocks)
    fp = derivative_sup(f)
    gp = derivative_sup(g)
    consts = {f"C[M={M}]": mags[M] * M**2 / (fp**2 + gp**2) for M in M_list}
    consts.update({f"magnitude[M={M}]": mags[M] for M in M_list})
    nonzero = [M for M in M_list if mags[M] > 0]
    slopes = {"magnitude_vs_M": loglog_slope(nonzero, [mags[M] for M in nonzero])} if len(nonzero) >= 2 else {}
    scale = max(1.0, max_entry(Gm))
    verdict = EXACT_PASS if all(v <= EXACT_TOL * scale for v in residuals.values()) else FAIL
    params = {"N": basis.N, "M_list": list(M_list), "f_prime_sup": fp, "g_prime_sup": gp, "dim": basis.dim}
    return BoundReport("localization", params, consts, residuals, slopes, {}, verdict, basis.dim)


def kappa(alpha: float, beta: float) -> float:
    return min((alpha - beta) / 4, alpha - 3, beta - alpha / 2, 2 * alpha - 3 * beta)


def check_cutoff_exponents(alpha: float, beta: float):
    if not alpha / 2 < beta < 2 * alpha / 3:
        raise ConfigError(f"need alpha/2 < beta < 2 alpha/3, got alpha={alpha}, beta={beta}")


def verify_R_lower_bound(G_eff: SparseOperator, A: Generator, H_N: SparseOperator, a0: float, ell: float, alpha: float, beta: float, spectra: bool = True) -> BoundReport:
    """Fitted constant of ``R >= 4 pi a0 N + (1 - C ell^k) H - C ell^-3a N_+^2/N - C ell^-3a``."""
    check_cutoff_exponents(alpha, beta)
    basis = G_eff.basis
    N = basis.N
    k = kappa(alpha, beta)
    conj = conjugate(G_eff, A, "dense")
    R = conj.matrix
    H = H_N.matrix
    n = basis.nplus.astype(float)
    blocks = blocks_of(basis)
    X = (R - 4 * math.pi * a0 * N * sp.identity(basis.dim, format="csr") - H).tocsr()
    W = (ell**k * H + _diag(ell ** (-3 * alpha) * (n**2 / N + 1))).tocsr()
    C, cert = fit_constant(X, W, blocks)
    residuals = {"R_hermiticity": conj.hermiticity_error}
    if spectra:
        residuals["spectrum_R_vs_Geff"] = spectral_distance(R, G_eff.matrix, blocks)
    verdict = EXACT_PASS if all(v <= 1e-8 for v in residuals.values()) and cert["valid"] else FAIL
    params = {"N": N, "ell": ell, "alpha": alpha, "beta": beta, "kappa": k, "a0": a0, "dim": basis.dim, "A_dropped_terms": A.dropped_terms}
    return BoundReport("R_lower_bound", params, {"C": C}, residuals, {}, {"C": cert}, verdict, basis.dim)


def spectral_distance(X, Y, blocks) -> float:
    """Largest per-eigenvalue difference, block by block."""
    worst = 0.0
    for idx in blocks:
        a = np.linalg.eigvalsh(_block(X, idx))
        b = np.linalg.eigvalsh(_block(Y, idx))
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


def growth_constant(gen: Generator, k: int) -> float:
    """``lambda_max((N_+ + 1)^{-k/2} e^{-G} (N_+ + 1)^k e^{G} (N_+ + 1)^{-k/2})``."""
    if gen.is_zero:
        return 1.0
    n = gen.basis.nplus.astype(float) + 1
    best = 0.0
    for idx, E in gen.dense_exp(1.0):
        w = n[idx]
        m = E.conj().T @ (w[:, None] ** k * E)
        s = w ** (-k / 2)
        m = s[:, None] * m * s[None, :]
        best = max(best, float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[-1]))
    return best


def verify_ngrow(gens: dict, k_list=(1, 2), flat_factor: float = 1.2) -> BoundReport:
    """``C(k, N)`` for a family of generators keyed by ``N``; flatness is ``max/min`` over ``N``."""
    consts, slopes = {}, {}
    for k in k_list:
        vals = {N: growth_constant(g, k) for N, g in sorted(gens.items())}
        for N, v in vals.items():
            consts[f"C[k={k},N={N}]"] = v
        slopes[f"flatness[k={k}]"] = stability_factor(vals.values())
    ok = all(v <= flat_factor for v in slopes.values())
    params = {"k_list": list(k_list), "N_list": sorted(gens), "flat_factor": flat_factor}
    samples = sum(g.basis.dim for g in gens.values())
    return BoundReport("ngrow", params, consts, {}, slopes, {}, FITTED_PASS if ok else FAIL, samples)
