"""Krylov-subspace kernels: a Lanczos eigensolver and the Arnoldi exponential action.

Both work through a ``matvec`` callable so sparse matrices, block-diagonal
operators and composed maps are handled alike.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DegeneracyWarning, KrylovStagnation, NoConvergence


def _as_matvec(op):
    if callable(op):
        return op
    return lambda v: op @ v


def _orthogonalize(w, vectors, passes: int = 2):
    for _ in range(passes):
        for basis in vectors:
            if basis.shape[1]:
                w = w - basis @ (basis.conj().T @ w)
    return w


@dataclass
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int


def lanczos_lowest(
    op,
    dim: int,
    k: int = 1,
    tol: float = 1e-10,
    max_iter: int = 5000,
    seed: int = 0,
    dtype=float,
    subspace: int = 120,
) -> EigenPairs:
    """Lowest ``k`` eigenpairs of a Hermitian operator.

    Each pair is found by a separate Lanczos run with full reorthogonalization,
    deflated against all previously locked eigenvectors, so repeated eigenvalues
    are resolved one vector at a time.  A run restarts from its best Ritz vector
    when the subspace is full.  A pair is accepted when the explicit residual
    satisfies ``||H psi - E psi|| <= tol * max(|E|, 1)``.
    """
    matvec = _as_matvec(op)
    k = min(k, dim)
    rng = np.random.default_rng(seed)
    locked = np.zeros((dim, 0), dtype=dtype)
    values, residuals = [], []
    total = 0
    subspace = max(2, min(subspace, dim))

    def random_start():
        v = rng.standard_normal(dim)
        if np.dtype(dtype).kind == "c":
            v = v + 1j * rng.standard_normal(dim)
        return v.astype(dtype)

    for _ in range(k):
        start = random_start()
        best = (math.inf, None)
        converged = False
        while total < max_iter and not converged:
            V = np.zeros((dim, 0), dtype=dtype)
            alphas, betas = [], []
            v = _orthogonalize(start, [locked])
            nv = np.linalg.norm(v)
            if nv < 1e-12:
                v = _orthogonalize(random_start(), [locked])
                nv = np.linalg.norm(v)
            v = v / nv
            free = dim - locked.shape[1]
            for j in range(min(subspace, free)):
                V = np.column_stack([V, v])
                w = matvec(v)
                total += 1
                a = float(np.real(np.vdot(v, w)))
                alphas.append(a)
                w = _orthogonalize(w, [locked, V])
                b = float(np.linalg.norm(w))
                T = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
                theta, S = np.linalg.eigh(T)
                est = b * abs(S[-1, 0])
                E = theta[0]
                if est <= 0.1 * tol * max(abs(E), 1.0) or j + 1 == min(subspace, free) or b < 1e-13:
                    psi = V @ S[:, 0]
                    psi = psi / np.linalg.norm(psi)
                    r = float(np.linalg.norm(matvec(psi) - E * psi))
                    total += 1
                    if r < best[0]:
                        best = (r, psi)
                    if r <= tol * max(abs(E), 1.0):
                        converged = True
                        break
                    if b < 1e-13:
                        # invariant subspace: continue with a fresh direction
                        w = _orthogonalize(random_start(), [locked, V])
                        b = 0.0
                        betas.append(0.0)
                        v = w / np.linalg.norm(w)
                        continue
                    if j + 1 == min(subspace, free):
                        start = psi
                        break
                betas.append(b)
                v = w / b
        if not converged:
            raise NoConvergence(best[0])
        psi = best[1]
        psi = _orthogonalize(psi, [locked])
        psi = psi / np.linalg.norm(psi)
        E = float(np.real(np.vdot(psi, matvec(psi))))
        locked = np.column_stack([locked, psi])
        values.append(E)
        residuals.append(best[0])

    order = np.argsort(values, kind="stable")
    vals = np.asarray(values)[order]
    vecs = locked[:, order]
    gaps = np.diff(vals)
    if gaps.size and np.any(gaps < 10 * tol * max(1.0, float(np.max(np.abs(vals))))):
        warnings.warn("near-degenerate eigenvalues in the computed cluster", DegeneracyWarning, stacklevel=2)
    return EigenPairs(vals, vecs, np.asarray(residuals)[order], total)


def expm_krylov(op, v, s: float = 1.0, tol: float = 1e-10, m_max: int = 40, max_substeps: int = 10_000):
    """``exp(s G) v`` by Arnoldi projection with adaptive sub-stepping.

    The a-posteriori error of a step of length ``tau`` is estimated by
    ``h_{m+1,m} |e_m^T exp(tau H_m) e_1| ||v||``; steps are shrunk until the
    estimate is below ``tol * tau / |s|`` so the errors sum to at most ``tol``.
    """
    matvec = _as_matvec(op)
    w = np.array(v, dtype=complex if np.iscomplexobj(v) else float, copy=True)
    if s == 0 or not np.any(w):
        return w
    dim = w.shape[0]
    m_max = max(1, min(m_max, dim))
    done, tau = 0.0, abs(s)
    sign = 1.0 if s > 0 else -1.0
    steps = 0
    while done < abs(s) * (1 - 1e-14):
        beta = np.linalg.norm(w)
        if beta == 0:
            return w
        V = np.zeros((dim, m_max + 1), dtype=np.result_type(w, float))
        H = np.zeros((m_max + 1, m_max), dtype=V.dtype)
        V[:, 0] = w / beta
        m = m_max
        happy = False
        for j in range(m_max):
            u = matvec(V[:, j])
            for _ in range(2):
                c = V[:, : j + 1].conj().T @ u
                H[: j + 1, j] += c
                u = u - V[:, : j + 1] @ c
            h = np.linalg.norm(u)
            H[j + 1, j] = h
            if h < 1e-14 * max(1.0, np.abs(H[: j + 1, j]).max()):
                m, happy = j + 1, True
                break
            V[:, j + 1] = u / h
        tau = min(tau, abs(s) - done)
        while True:
            E = sla.expm(sign * tau * H[:m, :m])
            err = 0.0 if happy else beta * abs(H[m, m - 1]) * abs(E[m - 1, 0])
            if err <= tol * tau / abs(s) or tau < 1e-12 * abs(s):
                break
            tau *= 0.5
        if err > tol * tau / abs(s) and not happy:
            raise KrylovStagnation(err)
        w = beta * (V[:, :m] @ E[:, 0])
        done += tau
        steps += 1
        if steps > max_substeps:
            raise KrylovStagnation(err, "too many Krylov sub-steps")
        if err < 0.1 * tol * tau / abs(s):
            tau *= 2
    return w
