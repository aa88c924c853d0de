"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from bosegp.bounds import blocks_of, loglog_slope, spectral_distance, stability_factor
from bosegp.cli import main
from bosegp.config import RunConfig
from bosegp.fock import PARTICLE, build_basis, lattice_modes
from bosegp.hamiltonians import VhatTable, build_HN
from bosegp.renorm import build_A, build_B, conjugate
from bosegp.scattering import Potential, integral_Vf, solve_neumann, zero_energy_scattering
from bosegp.spectra import depletion_vs_excess, ground_state, particle_problem
from bosegp.suites import _excitation_identity, excitation_problem, remainder_scaling, suite_algebra, suite_bounds


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} [{tag}] {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def bounds_reports():
    return {r.name + (f"[N={r.parameters['N']}]" if "N" in r.parameters and r.name != "localization" else ""): r for r in suite_bounds(RunConfig())}


def test_01_algebraic_exactness(report):
    cfg = RunConfig()
    t0 = time.perf_counter()
    rep = suite_algebra(cfg)[0]
    dt = time.perf_counter() - t0
    worst = max(rep.residuals[k] for k in ("u_rules", "comm_bp", "comm2"))
    ok = worst <= 1e-12 and dt < 5 and rep.parameters["dim"] <= 84
    assert report("1 algebra", ok, f"max error {worst:.2e} <= 1e-12, dim {rep.parameters['dim']}, {dt:.2f} s < 5 s")


def test_02_excitation_map(report):
    cfg = RunConfig()
    t0 = time.perf_counter()
    errors = {(N, m): _excitation_identity(cfg, N, m, 3)[0] for N in (2, 3, 4) for m in (1, 2)}
    dt = time.perf_counter() - t0
    worst = max(errors.values())
    ok = worst <= 1e-10 and dt < 60
    assert report("2 excitation map", ok, f"max |L - U H U*| = {worst:.2e} <= 1e-10 over N in 2..4, |m|^2 <= 1,2; {dt:.1f} s < 60 s")


def test_03_scattering(report):
    t0 = time.perf_counter()
    pot = Potential.square_well(2.0, 1.0)
    a0 = zero_energy_scattering(pot)
    a0_err = abs(a0 - (1 - math.tanh(1.0)))
    ell = 0.25
    sol20 = solve_neumann(pot, 80, ell)
    lam_rel = abs(sol20.lambda_ell / (3 * a0 / 20.0**3) - 1)
    radii = [5, 10, 20, 40]
    gaps = [abs(integral_Vf(solve_neumann(pot, int(R / ell), ell)) - 8 * math.pi * a0) for R in radii]
    slope = loglog_slope(radii, gaps)
    dt = time.perf_counter() - t0
    ok = a0_err <= 1e-8 and lam_rel <= 0.10 and abs(slope + 1) <= 0.25 and dt < 30
    assert report("3 scattering", ok, f"|a0 - (1 - tanh 1)| = {a0_err:.1e}; lambda rel dev {lam_rel:.3f} <= 0.10; slope {slope:.3f} in -1 +- 0.25; {dt:.1f} s < 30 s")


def test_04_remainder_scaling(report):
    t0 = time.perf_counter()
    Ns = [4, 6, 8, 10, 12]
    rows = remainder_scaling(Ns, 0.1, 1, 1, 0.3)
    slope = loglog_slope(Ns, [r[2] for r in rows])
    dt = time.perf_counter() - t0
    ok = abs(slope + 1) <= 0.2 and dt < 300
    assert report("4 remainder", ok, f"slope of ||d_p xi|| vs N = {slope:.3f} in -1 +- 0.2; {dt:.1f} s < 300 s")


def test_05_unitary_similarity(report):
    cfg = RunConfig()
    worst, dim, block = 0.0, 0, 0
    for N in cfg["bounds.N_grid"]:
        pr = excitation_problem(cfg, N, cfg["bounds.max_norm2"], cfg["bounds.dim"])
        blocks = blocks_of(pr.exc)
        G = conjugate(pr.pieces["L"], build_B(pr.exc, pr.eta.eta_H)).matrix
        R = conjugate(pr.pieces["G_eff"], build_A(pr.exc, pr.eta.eta, pr.eta.high, pr.eta.low)).matrix
        worst = max(worst, spectral_distance(G, pr.pieces["L"].matrix, blocks), spectral_distance(R, pr.pieces["G_eff"].matrix, blocks))
        dim = max(dim, pr.exc.dim)
        block = max(block, max(len(b) for b in blocks))
    # spectra are compared per momentum block, so the dense problem size is the block size
    ok = worst <= 1e-8 and block <= 2000
    assert report("5 similarity", ok, f"max eigenvalue difference {worst:.2e} <= 1e-8; dense blocks <= {block} <= 2000 (sector dim {dim})")


def test_06_localization(report, bounds_reports):
    loc = bounds_reports["localization"]
    identity = max(loc.residuals.values())
    slope = loc.slope_estimates.get("magnitude_vs_M", math.nan)
    ok = identity <= 1e-10 and abs(slope + 2) <= 0.2
    assert report("6 localization", ok, f"identity error {identity:.2e} <= 1e-10; commutator slope {slope:.3f} in -2 +- 0.2 (N = {loc.parameters['N']})")


def test_07_constant_stability(report, bounds_reports):
    theta = bounds_reports["theta_stability"]
    R = bounds_reports["R_stability"]
    certs = [c["valid"] for name, r in bounds_reports.items() if name.startswith(("theta_bound", "R_lower_bound")) for c in r.certificates.values()]
    s_theta = theta.slope_estimates["stability_factor"]
    s_R = R.slope_estimates["stability_factor"]
    ok = s_theta <= 3 and s_R <= 3 and certs and all(certs)
    assert report("7 constant stability", ok, f"C(delta=0.5) factor {s_theta:.2f}, R-bound factor {s_R:.2f}, both <= 3; {sum(certs)}/{len(certs)} certificates valid")


def test_08_condensation(report):
    pot = Potential.square_well(12.5, 0.4)
    a0 = zero_energy_scattering(pot)
    nplus, windows = {}, {}
    for N in range(2, 9):
        basis, H = particle_problem(pot, N, 1)
        nplus[N] = ground_state(H, 1).n_plus_expectation
        windows[N] = max(r.ratio for r in depletion_vs_excess(H, a0, n_states=6))
    s1 = stability_factor(nplus.values())
    s2 = stability_factor(windows.values())
    ok = s1 <= 3 and s2 <= 3
    assert report("8 condensation", ok, f"<N+> max/min {s1:.2f} <= 3; window ratio max/min {s2:.2f} <= 3 over N = 2..8")


def test_09_monotonicity_and_lanczos(report):
    pot = Potential.square_well(12.5, 0.4)
    drift = -math.inf
    for N in (2, 3, 4):
        energies = []
        for max_norm2, dim in [(1, 1), (1, 2), (1, 3), (2, 3)]:
            basis = build_basis(lattice_modes(max_norm2, dim, include_zero=True), N, PARTICLE)
            energies.append(ground_state(build_HN(basis, VhatTable(pot, N)), 1).energies[0])
        drift = max(drift, max(b - a for a, b in zip(energies, energies[1:])))
    lanczos_err, max_dim = 0.0, 0
    for N, m2 in [(2, 1), (3, 1), (4, 1), (2, 2)]:
        basis, H = particle_problem(pot, N, m2)
        assert basis.dim <= 500
        E = ground_state(H, 3).energies[:3]
        ref = np.linalg.eigvalsh(H.toarray())[:3]
        lanczos_err = max(lanczos_err, float(np.max(np.abs(E - ref))))
        max_dim = max(max_dim, basis.dim)
    ok = drift <= 1e-10 and lanczos_err <= 1e-10
    assert report("9 monotonicity", ok, f"max energy increase {drift:.2e} <= 1e-10; Lanczos vs dense {lanczos_err:.2e} <= 1e-10 at dim <= {max_dim}")


def test_10_determinism(report, tmp_path):
    blobs = []
    for run in ("a", "b"):
        code = main(["verify", "--suite", "all", "--seed", "7", "--out", str(tmp_path / run)])
        assert code in (0, 1)
        blobs.append(((tmp_path / run / "verify_all.json").read_bytes(), (tmp_path / run / "remainder_scaling.csv").read_bytes()))
    ok = blobs[0] == blobs[1]
    assert report("10 determinism", ok, f"verify --suite all reports byte-identical across runs: {ok}")
