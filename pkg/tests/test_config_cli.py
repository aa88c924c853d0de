import csv
import json

import pytest
from hypothesis import given, settings, strategies as st

from bosegp.cli import EXIT_BUDGET, EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main
from bosegp.config import SCHEMA, RunConfig, load_config, parse_config
from bosegp.errors import ConfigError

SMALL = "N = 3\nN_grid = 2, 3\nscatter.n_grid = 801\n"


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_defaults_validate():
    cfg = RunConfig().validate(bounds=True)
    assert cfg["N"] == 8 and cfg["cutoff.scheme"] == "shells"


def test_emit_parse_roundtrip():
    cfg = RunConfig()
    assert parse_config(cfg.emit()) == cfg


@settings(max_examples=40, deadline=None)
@given(
    st.integers(2, 40),
    st.floats(1e-3, 0.499, allow_nan=False),
    st.lists(st.integers(2, 30), min_size=1, max_size=6),
    st.floats(0.1, 100, allow_nan=False),
    st.integers(0, 2**64 - 1),
)
def test_roundtrip_property(N, ell, grid, v0, seed):
    cfg = RunConfig()
    cfg["N"], cfg["ell"], cfg["N_grid"], cfg["potential.v0"], cfg["seed"] = N, ell, grid, v0, seed
    back = parse_config(cfg.emit())
    assert back == cfg
    back.validate()


def test_comments_and_blank_lines():
    cfg = parse_config("# header\n\nN = 5  # trailing\nbounds.delta_grid = 0.5, 1\n")
    assert cfg["N"] == 5 and cfg["bounds.delta_grid"] == [0.5, 1.0]


@pytest.mark.parametrize(
    "text",
    ["bogus = 1\n", "N 3\n", "N = three\n", "N_grid = 2, x\n"],
)
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize(
    "key,value",
    [
        ("ell", 0.5),
        ("ell", 0.0),
        ("N", 1),
        ("N_grid", []),
        ("modes.dim", 4),
        ("cutoff.scheme", "radial"),
        ("seed", -1),
        ("seed", 2**64),
        ("cutoff.beta", 4.0),
        ("potential.kind", "gaussian"),
        ("potential.v0", -1.0),
        ("solver.tol", 0.0),
    ],
)
def test_validation_errors(key, value):
    cfg = RunConfig()
    cfg[key] = value
    with pytest.raises(ConfigError):
        cfg.validate()


def test_bounds_exponent_window():
    cfg = RunConfig()
    cfg["cutoff.beta"] = 1.5
    cfg.validate()
    with pytest.raises(ConfigError):
        cfg.validate(bounds=True)


def test_unknown_key_assignment():
    with pytest.raises(ConfigError):
        RunConfig()["nope"] = 1


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_tabulated_potential_config():
    cfg = parse_config("potential.kind = tabulated\npotential.r = 0, 0.2, 0.4\npotential.v = 1, 1, 0\n")
    cfg.validate()
    assert cfg.potential.support_radius == pytest.approx(0.4)
    cfg["potential.v"] = [1.0, 1.0]
    with pytest.raises(ConfigError):
        cfg.validate()


def test_schema_keys_all_emitted():
    assert [line.split(" = ")[0] for line in RunConfig().emit().splitlines()] == list(SCHEMA)


# ---------------------------------------------------------------------------
# CLI


def test_scatter_reports_a0(tmp_path):
    cfg = write_cfg(tmp_path, "potential.v0 = 2\npotential.radius = 1\nN = 20\n")
    assert main(["scatter", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    data = json.loads((tmp_path / "o" / "scattering.json").read_text())
    assert data["a0"] == pytest.approx(0.23840584404423511, abs=1e-8)
    with (tmp_path / "o" / "eta.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6 and set(rows[0]) == {"mx", "my", "mz", "eta", "high", "low"}


def test_bad_ell_exits_with_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "ell = 0.5\n")
    assert main(["scatter", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "ell" in capsys.readouterr().err


def test_negative_jobs_is_config_error(tmp_path):
    assert main(["sweep", "--jobs", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_budget_exceeded(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "fock.dim_max = 10\n")
    assert main(["diagonalize", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_BUDGET


def test_diagonalize_outputs(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["diagonalize", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "diagonalize.json").read_text())
    assert summary["N"] == 3 and summary["E0"] < summary["N"] * 10
    assert (tmp_path / "spectrum.csv").read_text().startswith("index,E,n_plus,residual")


def test_sweep_zero_potential(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "potential.kind = zero\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    with (tmp_path / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["N"]) for r in rows] == [2, 3]
    for r in rows:
        for col in ("E_N", "E_N_minus_4pi_a0_N", "n_plus", "depletion_times_N"):
            assert abs(float(r[col])) <= 1e-10


def test_sweep_deterministic_and_parallel(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    outputs = []
    for name, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / name), "--jobs", jobs]) == EXIT_OK
        outputs.append(((tmp_path / name / "sweep.csv").read_bytes(), (tmp_path / name / "windows.csv").read_bytes()))
    assert outputs[0] == outputs[1] == outputs[2]


def test_build_and_compare(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    out = tmp_path / "o"
    assert main(["build", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["parameters"]["N"] == 3
    L = out / "operators" / "L.txt"
    assert main(["verify", "--suite", "algebra", "--config", str(cfg), "--out", str(out), "--compare", str(L)]) == EXIT_OK
    lines = L.read_text().splitlines()
    i = next(k for k, line in enumerate(lines) if not line.startswith("#"))
    r, c, re_, im = lines[i].split()
    lines[i] = f"{r} {c} {float(re_) + 1e-6!r} {im}"
    L.write_text("\n".join(lines) + "\n")
    assert main(["verify", "--suite", "algebra", "--config", str(cfg), "--out", str(out), "--compare", str(L)]) == EXIT_CHECK


def test_verify_algebra_suite(tmp_path):
    assert main(["verify", "--suite", "algebra", "--out", str(tmp_path)]) == EXIT_OK
    data = json.loads((tmp_path / "verify_algebra.json").read_text())
    assert data["verdict"] != "fail"
    assert {r["name"] for r in data["reports"]} >= {"algebra_identities", "excitation_map"}


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "bosegp", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "verify" in proc.stdout
