"""Plain-text run configuration: one ``dotted.key = value`` per line, ``#`` comments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .scattering import Potential

# (type, default); list types are comma separated
SCHEMA: dict[str, tuple[str, object]] = {
    "potential.kind": ("str", "square_well"),
    "potential.v0": ("float", 12.5),
    "potential.radius": ("float", 0.4),
    "potential.r": ("floats", []),
    "potential.v": ("floats", []),
    "N": ("int", 8),
    "N_grid": ("ints", [2, 3, 4, 5, 6, 7, 8]),
    "ell": ("float", 0.25),
    "cutoff.alpha": ("float", 3.5),
    "cutoff.beta": ("float", 2.0),
    "cutoff.scheme": ("str", "shells"),
    "modes.max_norm2": ("int", 1),
    "modes.dim": ("int", 3),
    "scatter.n_grid": ("int", 4001),
    "solver.tol": ("float", 1e-10),
    "solver.max_iter": ("int", 20000),
    "solver.n_states": ("int", 6),
    "fock.dim_max": ("int", 250000),
    "renorm.eta_radius_guard": ("float", 0.3),
    "renorm.dense_dim_max": ("int", 2000),
    "renorm.krylov_tol": ("float", 1e-10),
    "algebra.N": ("int", 3),
    "algebra.N_grid": ("ints", [2, 3, 4]),
    "algebra.max_norm2": ("int", 1),
    "algebra.dim": ("int", 3),
    "remainder.N_grid": ("ints", [4, 6, 8, 10, 12]),
    "remainder.eta": ("float", 0.1),
    "remainder.max_norm2": ("int", 1),
    "remainder.dim": ("int", 1),
    "bounds.N_grid": ("ints", [4, 6, 8]),
    "bounds.max_norm2": ("int", 2),
    "bounds.dim": ("int", 2),
    "bounds.delta_grid": ("floats", [0.25, 0.5, 1.0]),
    "bounds.stability_factor": ("float", 3.0),
    "localization.N": ("int", 64),
    "localization.max_norm2": ("int", 1),
    "localization.dim": ("int", 1),
    "localization.M_list": ("ints", [2, 4, 8]),
    "seed": ("int", 0),
    "output.dir": ("str", "out"),
}

POTENTIAL_KINDS = ("square_well", "tabulated", "zero")


def _parse_value(key: str, kind: str, text: str):
    try:
        if kind == "str":
            return text
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        items = [t.strip() for t in text.split(",") if t.strip()]
        if kind == "ints":
            return [int(t) for t in items]
        if kind == "floats":
            return [float(t) for t in items]
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind}") from exc
    raise AssertionError(kind)


def _format_value(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "ints":
        return ", ".join(str(int(v)) for v in value)
    return str(value)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: v for k, (_, v) in SCHEMA.items()})
    source: str | None = None

    def __getitem__(self, key):
        return self.values[key]

    def __setitem__(self, key, value):
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        self.values[key] = value

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    @property
    def potential(self) -> Potential:
        kind = self["potential.kind"]
        if kind == "square_well":
            return Potential.square_well(self["potential.v0"], self["potential.radius"])
        if kind == "zero":
            return Potential.square_well(0.0, self["potential.radius"])
        return Potential.tabulated(self["potential.r"], self["potential.v"])

    def emit(self) -> str:
        lines = [f"{k} = {_format_value(SCHEMA[k][0], self.values[k])}" for k in SCHEMA]
        return "\n".join(lines) + "\n"

    def validate(self, bounds: bool = False) -> "RunConfig":
        v = self.values
        if v["potential.kind"] not in POTENTIAL_KINDS:
            raise ConfigError(f"potential.kind must be one of {POTENTIAL_KINDS}")
        if v["potential.kind"] == "tabulated" and len(v["potential.r"]) != len(v["potential.v"]):
            raise ConfigError("potential.r and potential.v must have equal length")
        try:
            self.potential
        except ValueError as exc:
            raise ConfigError(f"invalid potential: {exc}") from exc
        if not 0 < v["ell"] < 0.5:
            raise ConfigError(f"ell must satisfy 0 < ell < 1/2, got {v['ell']}")
        for key in ("N", "algebra.N", "localization.N"):
            if v[key] < 2:
                raise ConfigError(f"{key} must be at least 2")
        for key in ("N_grid", "algebra.N_grid", "remainder.N_grid", "bounds.N_grid"):
            if not v[key] or min(v[key]) < 1:
                raise ConfigError(f"{key} must be a nonempty list of positive integers")
        for key in ("modes.max_norm2", "algebra.max_norm2", "remainder.max_norm2", "bounds.max_norm2", "localization.max_norm2"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be at least 1")
        for key in ("modes.dim", "algebra.dim", "remainder.dim", "bounds.dim", "localization.dim"):
            if v[key] not in (1, 2, 3):
                raise ConfigError(f"{key} must be 1, 2 or 3")
        if v["cutoff.scheme"] not in ("shells", "literal"):
            raise ConfigError("cutoff.scheme must be 'shells' or 'literal'")
        for key in ("solver.tol", "renorm.krylov_tol", "renorm.eta_radius_guard"):
            if not (v[key] > 0 and math.isfinite(v[key])):
                raise ConfigError(f"{key} must be positive")
        if not 0 <= v["seed"] < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        a, b = v["cutoff.alpha"], v["cutoff.beta"]
        if not a > b > 0:
            raise ConfigError(f"need cutoff.alpha > cutoff.beta > 0, got {a}, {b}")
        if bounds and not a / 2 < b < 2 * a / 3:
            raise ConfigError(f"bounds checks need alpha/2 < beta < 2 alpha/3, got alpha={a}, beta={b}")
        return self


def parse_config(text: str, source: str | None = None) -> RunConfig:
    cfg = RunConfig(source=source)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        cfg.values[key] = _parse_value(key, SCHEMA[key][0], value)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
