"""Radial scattering problems for the interaction and the correlation kernel eta.

Radial functions are handled through ``m(r) = r f(r)``, which turns the 3D radial
Laplacian into ``-m''``.  Outside the support of ``V`` every problem is solved in
closed form; the ODE is only integrated on ``[0, R0]``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import bisect

from .errors import (
    AsymmetricModeSet,
    EigenvalueBracketFailure,
    InvalidPotential,
    QuadratureFailure,
    UnphysicalSolution,
)

RTOL = 1e-10
ATOL = 1e-12
GL_NODES = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)


@dataclass(frozen=True)
class Potential:
    """Radial, nonnegative, compactly supported interaction.

    ``kind`` is ``"square_well"`` (``v0`` on ``r < radius``) or ``"tabulated"``
    (``r_tab``/``v_tab``, interpolated by PCHIP and zero beyond the last node).
    """

    kind: str
    v0: float = 0.0
    radius: float = 1.0
    r_tab: tuple = ()
    v_tab: tuple = ()

    def __post_init__(self):
        if self.kind == "square_well":
            if not (math.isfinite(self.v0) and math.isfinite(self.radius)):
                raise InvalidPotential("square well parameters must be finite")
            if self.v0 < 0:
                raise InvalidPotential("potential must be nonnegative")
            if self.radius <= 0:
                raise InvalidPotential("support radius must be positive")
        elif self.kind == "tabulated":
            r = np.asarray(self.r_tab, dtype=float)
            v = np.asarray(self.v_tab, dtype=float)
            if r.ndim != 1 or r.shape != v.shape or r.size < 2:
                raise InvalidPotential("tabulated potential needs matching 1D grids of length >= 2")
            if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
                raise InvalidPotential("tabulated values must be finite")
            if r[0] != 0 or np.any(np.diff(r) <= 0):
                raise InvalidPotential("tabulated grid must start at 0 and increase strictly")
            if np.any(v < 0):
                raise InvalidPotential("potential must be nonnegative")
        else:
            raise InvalidPotential(f"unknown potential kind {self.kind!r}")

    @classmethod
    def square_well(cls, v0: float, radius: float) -> "Potential":
        return cls("square_well", v0=float(v0), radius=float(radius))

    @classmethod
    def tabulated(cls, r, v) -> "Potential":
        return cls("tabulated", r_tab=tuple(map(float, r)), v_tab=tuple(map(float, v)))

    @property
    def support_radius(self) -> float:
        return self.radius if self.kind == "square_well" else self.r_tab[-1]

    @property
    def is_zero(self) -> bool:
        if self.kind == "square_well":
            return self.v0 == 0
        return not any(self.v_tab)

    @property
    def breakpoints(self) -> np.ndarray:
        """Points where V may be non-smooth, including 0 and the support radius."""
        if self.kind == "square_well":
            return np.array([0.0, self.radius])
        return np.asarray(self.r_tab)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "square_well":
            return np.where(r < self.radius, self.v0, 0.0)
        interp = _pchip(self.r_tab, self.v_tab)
        inside = r <= self.r_tab[-1]
        out = np.zeros_like(r)
        out[inside] = np.maximum(interp(r[inside]), 0.0)
        return out

    def scaled(self, N: float) -> "Potential":
        """The potential ``N^2 V(N r)``."""
        if self.kind == "square_well":
            return Potential.square_well(self.v0 * N**2, self.radius / N)
        return Potential.tabulated(np.asarray(self.r_tab) / N, np.asarray(self.v_tab) * N**2)


_PCHIP_CACHE: dict = {}


def _pchip(r, v):
    key = (r, v)
    if key not in _PCHIP_CACHE:
        _PCHIP_CACHE[key] = PchipInterpolator(np.asarray(r), np.asarray(v), extrapolate=False)
    return _PCHIP_CACHE[key]


def sinc(x):
    """``sin(x)/x`` with value 1 at 0 (numpy's sinc is normalized by pi)."""
    return np.sinc(np.asarray(x) / np.pi)


def _panels(breaks, k: float) -> np.ndarray:
    """Panel edges refining ``breaks`` so no panel exceeds an eighth of a wavelength."""
    edges = [breaks[0]]
    width = math.inf if k == 0 else (2 * math.pi / abs(k)) / 8
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / width)) if math.isfinite(width) else 1
        edges.extend(np.linspace(a, b, n + 1)[1:])
    return np.asarray(edges)


def gauss_legendre(func, edges) -> float:
    """Composite Gauss-Legendre integral of a vectorized ``func`` over panels ``edges``."""
    a, b = np.asarray(edges[:-1]), np.asarray(edges[1:])
    half = (b - a)[:, None] / 2
    x = (a[:, None] + b[:, None]) / 2 + half * _GL_X[None, :]
    val = float(np.sum(half * _GL_W[None, :] * func(x)))
    if not math.isfinite(val):
        raise QuadratureFailure("non-finite quadrature result")
    return val


def radial_fourier(func, breaks, k: float) -> float:
    """``4 pi int r^2 func(r) sinc(k r) dr`` over ``[breaks[0], breaks[-1]]``."""
    edges = _panels(np.asarray(breaks, dtype=float), k)
    return 4 * math.pi * gauss_legendre(lambda r: r**2 * func(r) * sinc(k * r), edges)


def fourier_V(potential: Potential, k) -> float:
    """Fourier transform ``V^(k)`` of the radial potential at wavenumber ``|k|``."""
    k = float(np.linalg.norm(np.atleast_1d(k)))
    if potential.is_zero:
        return 0.0
    return radial_fourier(potential, potential.breakpoints, k)


def square_well_fourier(v0: float, radius: float, k: float) -> float:
    """Closed form ``4 pi V0 (sin kR - kR cos kR)/k^3`` (the k -> 0 limit is the volume)."""
    if k == 0:
        return 4 * math.pi * v0 * radius**3 / 3
    x = k * radius
    if x < 1e-3:
        return 4 * math.pi * v0 * radius**3 * (1 / 3 - x**2 / 30)
    return 4 * math.pi * v0 * (math.sin(x) - x * math.cos(x)) / k**3


def _integrate_inner(potential: Potential, lam: float, dense: bool = False):
    """Integrate ``m'' = (V/2 - lam) m`` on ``[0, R0]`` with ``m(0)=0, m'(0)=1``."""
    R0 = potential.support_radius
    breaks = potential.breakpoints

    def rhs(r, y):
        return [y[1], (0.5 * float(potential(r)) - lam) * y[0]]

    y = np.array([0.0, 1.0])
    pieces = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        sol = solve_ivp(rhs, (a, b), y, method="RK45", rtol=RTOL, atol=ATOL, dense_output=dense)
        if not sol.success:
            raise UnphysicalSolution(f"radial integration failed: {sol.message}")
        y = sol.y[:, -1]
        pieces.append((a, b, sol.sol if dense else None))
    if dense:
        return y, pieces
    return y, R0


def zero_energy_scattering(potential: Potential) -> float:
    """Scattering length ``a0 = R0 - m(R0)/m'(R0)`` of the zero-energy problem."""
    if potential.is_zero:
        return 0.0
    (m, dm), R0 = _integrate_inner(potential, 0.0)
    if dm <= 0:
        raise UnphysicalSolution("m'(R0) <= 0 for a nonnegative potential")
    return R0 - m / dm


def square_well_a0(v0: float, radius: float) -> float:
    """Closed-form scattering length of the square well for ``-Delta + V/2``."""
    c = math.sqrt(v0 / 2)
    if c == 0:
        return 0.0
    return radius * (1 - math.tanh(c * radius) / (c * radius))


def _outer(mR, dmR, lam, s):
    """Free solution of ``-m'' = lam m`` at distance ``s`` beyond ``R0`` and its derivative."""
    k = math.sqrt(lam)
    s = np.asarray(s, dtype=float)
    if k == 0:
        return mR + dmR * s, dmR + 0 * s
    return (
        mR * np.cos(k * s) + dmR * s * sinc(k * s),
        -mR * k * np.sin(k * s) + dmR * np.cos(k * s),
    )


@dataclass(frozen=True, eq=False)
class ScatteringSolution:
    """Neumann ground state on ``|x| <= N ell`` with ``f(N ell) = 1``.

    ``m_samples``/``dm_samples`` hold ``m = r f`` and ``m'`` on ``r_grid``; ``f``, ``w``
    and ``m`` evaluate the solution at arbitrary radii through the ODE interpolant
    and the closed-form outer solution.
    """

    potential: Potential
    N: int
    ell: float
    lambda_ell: float
    a0: float
    r_grid: np.ndarray
    f_samples: np.ndarray
    w_samples: np.ndarray
    m_samples: np.ndarray
    dm_samples: np.ndarray
    scale: float
    _pieces: tuple = field(repr=False, default=())
    _edge: tuple = field(repr=False, default=(0.0, 1.0))

    @property
    def radius(self) -> float:
        return self.N * self.ell

    def m_and_dm(self, r):
        r = np.asarray(r, dtype=float)
        m = np.empty_like(r)
        dm = np.empty_like(r)
        R0 = self.potential.support_radius if self._pieces else 0.0
        outer = r >= R0
        mo, dmo = _outer(self._edge[0], self._edge[1], self.lambda_ell, r[outer] - R0)
        m[outer], dm[outer] = mo, dmo
        for a, b, interp in self._pieces:
            sel = (r >= a) & (r <= b) & ~outer
            if sel.any():
                y = interp(r[sel])
                m[sel], dm[sel] = y[0], y[1]
        return self.scale * m, self.scale * dm

    def m(self, r):
        return self.m_and_dm(r)[0]

    def f(self, r):
        r = np.asarray(r, dtype=float)
        m, dm = self.m_and_dm(r)
        safe = np.where(r > 0, r, 1.0)
        out = np.where(r > 0, m / safe, dm)
        return np.where(r <= self.radius, out, 1.0)

    def w(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.radius, 1.0 - self.f(r), 0.0)

    def breakpoints(self) -> np.ndarray:
        if self.potential.is_zero:
            return np.array([0.0, self.radius])
        b = self.potential.breakpoints
        return np.append(b[b < self.radius], self.radius)


def _neumann_residual(potential: Potential, lam: float, Rb: float) -> float:
    (mR, dmR), R0 = _integrate_inner(potential, lam)
    m, dm = _outer(mR, dmR, lam, Rb - R0)
    return float(dm * Rb - m)


def solve_neumann(
    potential: Potential,
    N: int,
    ell: float,
    n_grid: int = 4001,
    bracket_factor: float = 10.0,
    scan_points: int = 24,
) -> ScatteringSolution:
    """Smallest Neumann eigenvalue on the ball of radius ``N ell`` by shooting on lambda."""
    if N < 2:
        raise ValueError("N must be at least 2")
    if not 0 < ell < 0.5:
        raise ValueError(f"ell must lie in (0, 1/2), got {ell}")
    Rb = N * ell
    R0 = potential.support_radius
    if Rb <= R0:
        raise ValueError(f"N*ell = {Rb} must exceed the support radius {R0}")
    a0 = zero_energy_scattering(potential)

    if potential.is_zero:
        lam = 0.0
        pieces, edge = (), (0.0, 1.0)
    else:
        hi = bracket_factor * 3 * a0 / Rb**3
        grid = np.linspace(hi / scan_points, hi, scan_points)
        g = lambda lam: _neumann_residual(potential, lam, Rb)
        if g(0.0) <= 0:
            raise EigenvalueBracketFailure("Neumann residual is not positive at lambda = 0")
        lo = 0.0
        for x in grid:
            if g(x) < 0:
                lam = bisect(g, lo, x, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
                break
            lo = x
        else:
            raise EigenvalueBracketFailure(f"no sign change of the Neumann residual in (0, {hi:.3e}]")
        edge_y, pieces = _integrate_inner(potential, lam, dense=True)
        edge = (float(edge_y[0]), float(edge_y[1]))
        pieces = tuple(pieces)

    partial = ScatteringSolution(potential, N, ell, lam, a0, np.zeros(0), *(np.zeros(0),) * 4, 1.0, pieces, edge)
    mB = float(partial.m(np.array([Rb]))[0])
    scale = Rb / mB
    r = sample_grid(potential, Rb, n_grid)
    sol = ScatteringSolution(potential, N, ell, lam, a0, r, *(np.zeros(0),) * 4, scale, pieces, edge)
    m, dm = sol.m_and_dm(r)
    f = sol.f(r)
    return ScatteringSolution(potential, N, ell, lam, a0, r, f, 1.0 - f, m, dm, scale, pieces, edge)


def sample_grid(potential: Potential, Rb: float, n_grid: int) -> np.ndarray:
    """Two uniform segments ``[0, R0]`` and ``[R0, Rb]`` with matching spacing."""
    R0 = 0.0 if potential.is_zero else potential.support_radius
    if R0 == 0.0:
        return np.linspace(0.0, Rb, n_grid)
    n1 = max(3, round((n_grid - 1) * R0 / Rb))
    n2 = max(3, n_grid - 1 - n1)
    return np.concatenate([np.linspace(0.0, R0, n1 + 1), np.linspace(R0, Rb, n2 + 1)[1:]])


def integral_Vf(sol: ScatteringSolution) -> float:
    """``int V f = 4 pi int r V(r) m(r) dr`` over the support of ``V``."""
    pot = sol.potential
    if pot.is_zero:
        return 0.0
    return 4 * math.pi * gauss_legendre(lambda r: r * pot(r) * sol.m(r), _panels(pot.breakpoints, 0.0))


def scattering_residual(sol: ScatteringSolution, exclude=None):
    """Pointwise ``|(-m'' + V m/2 - lam m)/r|`` on the interior grid and the term scale.

    ``m''`` is the central difference of the sampled ``m'``.  Nodes whose stencil
    straddles a breakpoint of ``V`` (or any radius in ``exclude``) are skipped.
    """
    r, m, dm = sol.r_grid, sol.m_samples, sol.dm_samples
    pot = sol.potential
    if pot.is_zero:
        return np.zeros(max(len(r) - 2, 0)), 1.0
    h_lo = r[1:-1] - r[:-2]
    h_hi = r[2:] - r[1:-1]
    mid = r[1:-1]
    d2m = (dm[2:] - dm[:-2]) / (h_lo + h_hi)
    vm = 0.5 * pot(mid) * m[1:-1]
    res = np.abs(-d2m + vm - sol.lambda_ell * m[1:-1]) / mid
    skip = np.zeros(mid.shape, dtype=bool)
    singular = list(pot.breakpoints[1:]) + list(exclude or [])
    for b in singular:
        skip |= (r[:-2] < b) & (r[2:] > b) | np.isclose(mid, b, rtol=0, atol=1e-12)
    uniform = np.isclose(h_lo, h_hi, rtol=1e-6)
    keep = ~skip & uniform
    scale = float(np.max(np.abs(vm / mid)))
    return res[keep], scale


def verify_scattering_relation(sol: ScatteringSolution) -> float:
    """Relative residual of ``(-Delta + V/2) f = lam f`` on the grid.

    The scaled equation for ``f(N x)`` differs only by an overall factor ``N^2``,
    which cancels in the ratio.
    """
    res, scale = scattering_residual(sol)
    if res.size == 0:
        return 0.0
    return float(res.max() / scale)


# ---------------------------------------------------------------------------
# kernel eta


def momentum_norms(modes) -> np.ndarray:
    """``|p| = 2 pi |m|`` for integer modes."""
    m = np.asarray(modes, dtype=np.int64).reshape(-1, 3)
    return 2 * math.pi * np.sqrt((m * m).sum(axis=1))


def cutoff_masks(modes, ell: float, alpha: float, beta: float, scheme: str = "shells"):
    """Boolean masks of the high set ``P_H`` and low set ``P_L`` within ``modes``.

    ``"literal"`` applies ``|p| >= ell^-alpha`` and ``|p| <= ell^-beta``.  ``"shells"``
    places the outermost |m|^2 shell of the lattice in ``P_H`` and the innermost one
    in ``P_L``, since the literal high cutoff lies far beyond any desk-sized lattice.
    """
    m = np.asarray(modes, dtype=np.int64).reshape(-1, 3)
    n2 = (m * m).sum(axis=1)
    if scheme == "literal":
        p = momentum_norms(m)
        return p >= ell**-alpha, p <= ell**-beta
    if scheme == "shells":
        if n2.size == 0:
            return np.zeros(0, bool), np.zeros(0, bool)
        return n2 == n2.max(), n2 == n2.min()
    raise ValueError(f"unknown cutoff scheme {scheme!r}")


def check_symmetric(modes):
    m = np.asarray(modes, dtype=np.int64).reshape(-1, 3)
    s = {tuple(x) for x in m}
    if any(tuple(-x) not in s for x in m):
        raise AsymmetricModeSet("mode set must be symmetric under p -> -p")
    if (0, 0, 0) in s:
        raise ValueError("eta modes must exclude p = 0")


@dataclass(frozen=True, eq=False)
class EtaCoefficients:
    modes: np.ndarray
    eta: np.ndarray
    eta0: float
    alpha: float
    beta: float
    ell: float
    N: int
    high: np.ndarray
    low: np.ndarray
    l2_norm_integral: float
    scheme: str = "shells"

    @property
    def eta_H(self) -> np.ndarray:
        return np.where(self.high, self.eta, 0.0)

    @property
    def l2_norm_eta(self) -> float:
        """Norm of the mode sum including the ``p = 0`` coefficient."""
        return float(math.sqrt(np.sum(self.eta**2) + self.eta0**2))

    @property
    def l2_norm_etaH(self) -> float:
        return float(np.linalg.norm(self.eta_H))

    def as_dict(self, which: str = "eta") -> dict:
        vals = self.eta if which == "eta" else self.eta_H
        return {tuple(int(c) for c in m): float(v) for m, v in zip(self.modes, vals)}

    def decay_constant(self) -> float:
        """``max_p |p|^2 |eta_p|`` over the mode set."""
        if self.eta.size == 0:
            return 0.0
        return float(np.max(momentum_norms(self.modes) ** 2 * np.abs(self.eta)))


def eta_value(sol: ScatteringSolution, p_norm: float) -> float:
    """``eta_p = -(4 pi / N^2) int_0^{N ell} r^2 w(r) sinc(|p| r / N) dr``."""
    if sol.potential.is_zero:
        return 0.0
    return -radial_fourier(sol.w, sol.breakpoints(), p_norm / sol.N) / sol.N**2


def eta_coefficients(
    sol: ScatteringSolution, modes, alpha: float, beta: float, scheme: str = "shells"
) -> EtaCoefficients:
    check_symmetric(modes)
    if not alpha > beta > 0:
        raise ValueError("need alpha > beta > 0")
    modes = np.asarray(modes, dtype=np.int64).reshape(-1, 3)
    norms = momentum_norms(modes)
    cache: dict = {}
    eta = np.empty(len(modes))
    for i, (m, p) in enumerate(zip(modes, norms)):
        key = int(m @ m)
        if key not in cache:
            cache[key] = eta_value(sol, p)
        eta[i] = cache[key]
    eta0 = eta_value(sol, 0.0)
    high, low = cutoff_masks(modes, sol.ell, alpha, beta, scheme)
    if sol.potential.is_zero:
        integral = 0.0
    else:
        edges = _panels(sol.breakpoints(), 0.0)
        integral = 4 * math.pi / sol.N * gauss_legendre(lambda r: r**2 * sol.w(r) ** 2, edges)
    return EtaCoefficients(modes, eta, eta0, alpha, beta, sol.ell, sol.N, high, low, integral, scheme)


# ---------------------------------------------------------------------------
# export


def write_solution(sol: ScatteringSolution, out_dir, stem: str = "scattering") -> tuple[Path, Path]:
    """CSV with columns ``r, f, w`` and a JSON header ``{N, ell, lambda, a0}``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    with csv_path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["r", "f", "w"])
        for r, f, w in zip(sol.r_grid, sol.f_samples, sol.w_samples):
            wr.writerow([f"{r:.17g}", f"{f:.17g}", f"{w:.17g}"])
    header = {"N": sol.N, "ell": sol.ell, "lambda": sol.lambda_ell, "a0": sol.a0}
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path
