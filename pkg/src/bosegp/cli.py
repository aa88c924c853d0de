"""Command line entry point: ``bosegp {scatter,build,diagonalize,verify,sweep}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import suites
from .bounds import FAIL, BoundReport, max_entry
from .config import RunConfig, load_config
from .errors import BoseGPError, ConfigError, DimensionBudgetExceeded
from .fock import EXCITATION, PARTICLE, build_basis, lattice_modes, read_triplets, write_triplets
from .hamiltonians import VhatTable, build_bundle
from .scattering import eta_coefficients, solve_neumann, write_solution, zero_energy_scattering
from .spectra import SWEEP_COLUMNS, depletion_vs_excess, energy_sweep, ground_state, particle_problem

log = logging.getLogger("bosegp")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


def _num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([v if isinstance(v, str) else _num(v) for v in row])
    return path


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _out(cfg: RunConfig) -> Path:
    return Path(cfg["output.dir"])


def _exc_setup(cfg: RunConfig):
    N = cfg["N"]
    modes = lattice_modes(cfg["modes.max_norm2"], cfg["modes.dim"])
    exc = build_basis(modes, N, EXCITATION, dim_max=cfg["fock.dim_max"])
    return exc, VhatTable(cfg.potential, N)


# ---------------------------------------------------------------------------


def cmd_scatter(cfg: RunConfig, args) -> int:
    sol = solve_neumann(cfg.potential, cfg["N"], cfg["ell"], n_grid=cfg["scatter.n_grid"])
    csv_path, json_path = write_solution(sol, _out(cfg))
    modes = lattice_modes(cfg["modes.max_norm2"], cfg["modes.dim"])
    eta = eta_coefficients(sol, modes, cfg["cutoff.alpha"], cfg["cutoff.beta"], cfg["cutoff.scheme"])
    rows = [[*(int(c) for c in m), e, int(h), int(lo)] for m, e, h, lo in zip(eta.modes, eta.eta, eta.high, eta.low)]
    write_csv(_out(cfg) / "eta.csv", ["mx", "my", "mz", "eta", "high", "low"], rows)
    print(f"a0 = {sol.a0:.10g}  lambda = {sol.lambda_ell:.10g}  -> {json_path}")
    return EXIT_OK


def cmd_build(cfg: RunConfig, args) -> int:
    exc, vhat = _exc_setup(cfg)
    a0 = zero_energy_scattering(cfg.potential)
    sol = solve_neumann(cfg.potential, cfg["N"], cfg["ell"], n_grid=cfg["scatter.n_grid"])
    eta = eta_coefficients(sol, exc.modes, cfg["cutoff.alpha"], cfg["cutoff.beta"], cfg["cutoff.scheme"])
    params = {"seed": cfg["seed"], "max_norm2": cfg["modes.max_norm2"], "lattice_dim": cfg["modes.dim"]}
    full = build_basis(lattice_modes(cfg["modes.max_norm2"], cfg["modes.dim"], include_zero=True), cfg["N"], PARTICLE, dim_max=cfg["fock.dim_max"])
    bundle = build_bundle(exc, vhat, a0=a0, high_mask=eta.high, full=full, parameters=params)
    op_dir = _out(cfg) / "operators"
    op_dir.mkdir(parents=True, exist_ok=True)
    for name, op in sorted(bundle.pieces.items()):
        write_triplets(op, op_dir / f"{name}.txt")
    (_out(cfg) / "manifest.json").write_text(bundle.manifest_json())
    print(f"wrote {len(bundle.pieces)} operators (dim {exc.dim}) to {op_dir}")
    return EXIT_OK


def cmd_diagonalize(cfg: RunConfig, args) -> int:
    basis, H = particle_problem(cfg.potential, cfg["N"], cfg["modes.max_norm2"], cfg["modes.dim"], cfg["fock.dim_max"])
    res = ground_state(H, cfg["solver.n_states"], tol=cfg["solver.tol"], max_iter=cfg["solver.max_iter"], seed=cfg["seed"])
    a0 = zero_energy_scattering(cfg.potential)
    rows = [(i, e, n, r) for i, (e, n, r) in enumerate(zip(res.energies, res.n_plus, res.residuals))]
    write_csv(_out(cfg) / "spectrum.csv", ["index", "E", "n_plus", "residual"], rows)
    summary = {
        "N": cfg["N"],
        "dim": basis.dim,
        "a0": a0,
        "E0": float(res.energies[0]),
        "E0_minus_4pi_a0_N": float(res.energies[0] - 4 * math.pi * a0 * cfg["N"]),
        "ground_cluster": res.cluster_size,
        "n_plus": res.n_plus_expectation,
        "condensate_fraction": res.condensate_fraction,
        "seed": cfg["seed"],
    }
    write_json(_out(cfg) / "diagonalize.json", summary)
    print(f"E0 = {summary['E0']:.12g}  <N+> = {summary['n_plus']:.6g}  dim = {basis.dim}")
    return EXIT_OK


def _compare(cfg: RunConfig, path: Path) -> BoundReport:
    """Rebuild the operator named in a triplet file and report the max-entry difference."""
    header, matrix = read_triplets(path)
    name = header["operator"]
    N = int(header["N"])
    modes = lattice_modes(cfg["modes.max_norm2"], cfg["modes.dim"])
    exc = build_basis(modes, N, EXCITATION, dim_max=cfg["fock.dim_max"])
    vhat = VhatTable(cfg.potential, N)
    a0 = zero_energy_scattering(cfg.potential)
    sol = solve_neumann(cfg.potential, N, cfg["ell"], n_grid=cfg["scatter.n_grid"])
    eta = eta_coefficients(sol, exc.modes, cfg["cutoff.alpha"], cfg["cutoff.beta"], cfg["cutoff.scheme"])
    full = None
    if header.get("sector") == PARTICLE:
        full = build_basis(lattice_modes(cfg["modes.max_norm2"], cfg["modes.dim"], include_zero=True), N, PARTICLE)
    pieces = build_bundle(exc, vhat, a0=a0, high_mask=eta.high, full=full).pieces
    key = path.stem if path.stem in pieces else name
    params = {"file": path.name, "operator": name, "N": N}
    if key not in pieces or pieces[key].shape != matrix.shape:
        return BoundReport("compare", params, {}, {"max_entry_diff": math.inf}, {}, {}, FAIL, 0, "operator or shape mismatch")
    diff = max_entry(pieces[key].matrix - matrix)
    verdict = "exact_pass" if diff <= 1e-12 else FAIL
    return BoundReport("compare", params, {}, {"max_entry_diff": diff}, {}, {}, verdict, matrix.shape[0])


def cmd_verify(cfg: RunConfig, args) -> int:
    chosen = ["algebra", "renorm", "bounds"] if args.suite == "all" else [args.suite]
    if "bounds" in chosen:
        cfg.validate(bounds=True)
    reports, timings = [], {}
    remainder_rows = None
    for name in chosen:
        t0 = time.perf_counter()
        if name == "algebra":
            reports += suites.suite_algebra(cfg)
        elif name == "renorm":
            reps, remainder_rows = suites.suite_renorm(cfg)
            reports += reps
        else:
            reports += suites.suite_bounds(cfg)
        timings[name] = time.perf_counter() - t0
    if args.compare:
        reports.append(_compare(cfg, Path(args.compare)))
    ok = all(r.passed for r in reports)
    out = _out(cfg)
    aggregate = {
        "suite": args.suite,
        "seed": cfg["seed"],
        "verdict": "pass" if ok else "fail",
        "reports": [r.to_dict() for r in reports],
    }
    write_json(out / f"verify_{args.suite}.json", aggregate)
    write_json(out / f"verify_{args.suite}_timings.json", {k: round(v, 3) for k, v in timings.items()})
    if remainder_rows is not None:
        rows = [(N, " ".join(str(c) for c in p), d, ref) for N, p, d, ref in remainder_rows]
        write_csv(out / "remainder_scaling.csv", ["N", "p", "norm_d", "norm_ref"], rows)
    for r in reports:
        print(f"{r.verdict:12s} {r.name}")
    print("verify:", "pass" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CHECK


def _sweep_point(payload):
    cfg_text, N = payload
    from .config import parse_config

    cfg = parse_config(cfg_text)
    row = energy_sweep(cfg.potential, [N], cfg["modes.max_norm2"], cfg["modes.dim"], cfg["solver.tol"], cfg["seed"], cfg["fock.dim_max"], cfg["solver.max_iter"])[0]
    windows = []
    if row.status == "ok" and row.dim > 1:
        try:
            _, H = particle_problem(cfg.potential, N, cfg["modes.max_norm2"], cfg["modes.dim"], cfg["fock.dim_max"])
            a0 = zero_energy_scattering(cfg.potential)
            windows = depletion_vs_excess(H, a0, n_states=min(cfg["solver.n_states"], row.dim), tol=cfg["solver.tol"], seed=cfg["seed"])
        except BoseGPError as exc:
            log.warning("window statistics failed at N=%s: %s", N, exc)
    return row, windows


def cmd_sweep(cfg: RunConfig, args) -> int:
    payloads = [(cfg.emit(), N) for N in cfg["N_grid"]]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(p) for p in payloads]
    out = _out(cfg)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, [r.values() for r, _ in results])
    wrows = [(r.N, w.K, w.n_states, w.max_n_plus, w.ratio) for r, ws in results for w in ws]
    write_csv(out / "windows.csv", ["N", "K", "n_states", "max_n_plus", "ratio"], wrows)
    manifest = {
        "a0": zero_energy_scattering(cfg.potential),
        "config": cfg.emit().splitlines(),
        "seed": cfg["seed"],
        "points": [{"N": r.N, "dim": r.dim, "status": r.status} for r, _ in results],
    }
    write_json(out / "sweep.json", manifest)
    write_json(out / "sweep_timings.json", {str(r.N): round(r.runtime, 3) for r, _ in results})
    failed = [r.N for r, _ in results if r.status != "ok"]
    print(f"sweep over {len(results)} points written to {out}" + (f"; failed: {failed}" if failed else ""))
    if failed and all(r.status.endswith("DimensionBudgetExceeded") for r, _ in results if r.status != "ok"):
        return EXIT_BUDGET
    return EXIT_CHECK if failed else EXIT_OK


COMMANDS = {
    "scatter": cmd_scatter,
    "build": cmd_build,
    "diagonalize": cmd_diagonalize,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file (defaults apply otherwise)")
    common.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides seed)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for grid sweeps")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="bosegp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("scatter", parents=[common], help="scattering solution and eta kernel")
    sub.add_parser("build", parents=[common], help="export the Hamiltonian pieces as triplet files")
    sub.add_parser("diagonalize", parents=[common], help="low-lying spectrum of H_N")
    v = sub.add_parser("verify", parents=[common], help="run property suites")
    v.add_argument("--suite", choices=["algebra", "renorm", "bounds", "all"], default="all")
    v.add_argument("--compare", type=Path, help="triplet file to diff against the rebuilt operator")
    sub.add_parser("sweep", parents=[common], help="energy and depletion over N_grid")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.out is not None:
        cfg["output.dir"] = str(args.out)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionBudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (BoseGPError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
