"""Flat ``section.key = value`` experiment configs.

Every key is declared in :data:`SCHEMA` with a type and default; unknown keys
and bad values are errors that name the key and its line.  ``#`` starts a
comment.  Parsed configs materialize every default so a run can echo the
complete parameter set next to its outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["ConfigError", "ExperimentConfig", "SCHEMA", "parse_config", "parse_text"]

MODES = ("ca", "pde", "analyze", "consensus", "sweep")


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = ""
        if key is not None:
            where = f"{key}: " if line is None else f"line {line}: {key}: "
        super().__init__(where + message)
        self.key = key
        self.line = line


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _ints(raw: str) -> tuple:
    return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)


def _floats(raw: str) -> tuple:
    return tuple(float(x) for x in raw.replace(" ", "").split(",") if x)


def _choice(*options):
    def conv(raw):
        if raw not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {raw!r}")
        return raw
    conv.__name__ = "choice"
    return conv


def _finite(raw: str) -> float:
    x = float(raw)
    if not math.isfinite(x):
        raise ValueError(f"expected a finite number, got {raw!r}")
    return x


def _axis(n):
    return {
        f"sweep.axis{n}.name": (str, ""),
        f"sweep.axis{n}.values": (_floats, ()),
        f"sweep.axis{n}.start": (_finite, 0.0),
        f"sweep.axis{n}.stop": (_finite, 0.0),
        f"sweep.axis{n}.count": (int, 0),
        f"sweep.axis{n}.scale": (_choice("linear", "log"), "linear"),
    }


SCHEMA = {
    "mode": (_choice(*MODES), "ca"),
    "geometry.kind": (_choice("lattice", "fully_connected", "ultrametric", "random"), "lattice"),
    "geometry.dims": (_ints, (16, 16)),
    "geometry.radius": (_finite, 1.1),
    "geometry.boundary": (_choice("periodic", "open"), "periodic"),
    "geometry.g": (_finite, 1.0),
    "geometry.n_agents": (int, 16),
    "geometry.branching": (int, 2),
    "geometry.depth": (int, 4),
    "geometry.base": (_finite, 2.0),
    "geometry.q": (_finite, 0.5),
    "disorder.kind": (_choice("constant", "uniform", "lognormal"), "uniform"),
    "disorder.value": (_finite, 1.0),
    "disorder.low": (_finite, 0.5),
    "disorder.high": (_finite, 1.5),
    "disorder.mu": (_finite, 0.0),
    "disorder.sigma2": (_finite, 0.25),
    "disorder.self_esteem": (_bool, True),
    "dynamics.beta": (_finite, 0.0),
    "dynamics.rule": (_choice("sync", "mean_field"), "sync"),
    "dynamics.steps": (int, 100),
    "dynamics.stop_on_cycle": (_bool, True),
    "noise.kind": (_choice("none", "site", "global"), "none"),
    "noise.dist": (_choice("gaussian", "uniform"), "gaussian"),
    "noise.amplitude": (_finite, 0.0),
    "initial.kind": (_choice("uniform", "mixed", "critical"), "critical"),
    "initial.sign": (int, 1),
    "initial.m0": (_finite, 0.0),
    "initial.layout": (_choice("random", "clustered"), "random"),
    "seed.disorder": (int, 0),
    "seed.noise": (int, 0),
    "seed.initial": (int, 0),
    "seed.geometry": (int, 0),
    "output.snapshot_every": (int, 0),
    "pde.gamma": (_finite, 1.0),
    "pde.alpha": (_finite, 0.01),
    "pde.dx": (_finite, 1.0),
    "pde.dt": (_finite, 0.0),
    "pde.dt_fraction": (_finite, 0.5),
    "pde.t_end": (_finite, 10.0),
    "pde.record_every": (int, 10),
    "pde.tol": (_finite, 1e-8),
    "pde.f.kind": (_choice("constant", "uniform", "smooth", "linear", "disk"), "smooth"),
    "pde.f.value": (_finite, 2.0),
    "pde.f.low": (_finite, 0.5),
    "pde.f.high": (_finite, 1.5),
    "pde.f.corr": (_finite, 3.0),
    "pde.f.slope": (_finite, 0.5),
    "pde.f.inner": (_finite, 0.5),
    "pde.f.radius": (_finite, 4.0),
    "pde.init.kind": (_choice("random", "thomas_fermi", "disk", "constant"), "random"),
    "pde.init.amplitude": (_finite, 0.1),
    "pde.init.branch": (_choice("positive", "negative", "random"), "random"),
    "pde.init.radius": (_finite, 4.0),
    "pde.init.value": (_finite, 0.0),
    "analysis.realizations": (int, 1),
    "analysis.dense_max": (_finite, 1.0),
    "analysis.middle_max": (_finite, 10.0),
    "consensus.predictions": (str, ""),
    "consensus.mapping": (_choice("identity", "square"), "identity"),
    "consensus.max_steps": (int, 1000),
    "consensus.relax": (_choice("ca", "pde"), "ca"),
    "consensus.f_scale": (_finite, 2.0),
    "sweep.mode": (_choice("ca", "pde"), "pde"),
    **_axis(1),
    **_axis(2),
}

_POSITIVE = (
    "geometry.radius", "geometry.g", "geometry.n_agents", "geometry.base", "disorder.value", "pde.dx",
    "pde.dt_fraction", "pde.record_every", "analysis.realizations", "consensus.max_steps", "consensus.f_scale",
)
_NONNEG = ("dynamics.beta", "dynamics.steps", "noise.amplitude", "output.snapshot_every", "pde.alpha",
           "pde.dt", "pde.t_end", "pde.tol")


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(format_value(x) for x in v)
    return str(v)


@dataclass
class ExperimentConfig:
    values: dict
    lines: dict = field(default_factory=dict)
    source: Path | None = None

    def __getitem__(self, key):
        return self.values[key]

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        vals = dict(self.values)
        for k, v in overrides.items():
            if k not in SCHEMA:
                raise ConfigError("unknown key", k)
            vals[k] = v
        out = ExperimentConfig(vals, dict(self.lines), self.source)
        validate(out)
        return out

    def echo(self) -> str:
        return "".join(f"{k} = {format_value(self.values[k])}\n" for k in sorted(self.values))

    def resolve_path(self, raw: str) -> Path:
        p = Path(raw)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p

    # section helpers -------------------------------------------------------
    def geometry_spec(self) -> dict:
        v = self.values
        return {
            "kind": v["geometry.kind"], "dims": v["geometry.dims"], "radius": v["geometry.radius"],
            "boundary": v["geometry.boundary"], "g": v["geometry.g"], "n_agents": v["geometry.n_agents"],
            "branching": v["geometry.branching"], "depth": v["geometry.depth"], "base": v["geometry.base"],
            "q": v["geometry.q"], "seed": v["seed.geometry"],
        }

    def disorder_spec(self) -> dict:
        v = self.values
        return {"kind": v["disorder.kind"], "value": v["disorder.value"], "low": v["disorder.low"],
                "high": v["disorder.high"], "mu": v["disorder.mu"], "sigma2": v["disorder.sigma2"]}

    def axes(self) -> list:
        out = []
        for n in (1, 2):
            name = self.values[f"sweep.axis{n}.name"]
            if name:
                out.append((name, axis_values(self, n)))
        return out


def axis_values(cfg: ExperimentConfig, n: int) -> tuple:
    v = cfg.values
    if v[f"sweep.axis{n}.values"]:
        return v[f"sweep.axis{n}.values"]
    count = v[f"sweep.axis{n}.count"]
    start, stop = v[f"sweep.axis{n}.start"], v[f"sweep.axis{n}.stop"]
    if count < 1:
        raise ConfigError("axis needs explicit values or count >= 1", f"sweep.axis{n}.count", cfg.lines.get(f"sweep.axis{n}.count"))
    if count == 1:
        return (start,)
    if v[f"sweep.axis{n}.scale"] == "log":
        if start <= 0 or stop <= 0:
            raise ConfigError("log axis needs positive start and stop", f"sweep.axis{n}.start", cfg.lines.get(f"sweep.axis{n}.start"))
        ls, le = math.log10(start), math.log10(stop)
        return tuple(10 ** (ls + (le - ls) * k / (count - 1)) for k in range(count))
    return tuple(start + (stop - start) * k / (count - 1) for k in range(count))


def _err(cfg, msg, key):
    raise ConfigError(msg, key, cfg.lines.get(key))


def validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    for k in _POSITIVE:
        if not v[k] > 0:
            _err(cfg, f"must be > 0, got {format_value(v[k])}", k)
    for k in _NONNEG:
        if v[k] < 0:
            _err(cfg, f"must be >= 0, got {format_value(v[k])}", k)
    for k in ("seed.disorder", "seed.noise", "seed.initial", "seed.geometry"):
        if v[k] < 0:
            _err(cfg, f"seeds must be >= 0, got {v[k]}", k)
    if v["initial.sign"] not in (1, -1):
        _err(cfg, "must be 1 or -1", "initial.sign")
    if not -1.0 <= v["initial.m0"] <= 1.0:
        _err(cfg, "must lie in [-1, 1]", "initial.m0")
    if not 0 < v["geometry.q"] <= 1:
        _err(cfg, "connection probability must be in (0, 1]", "geometry.q")
    if v["disorder.kind"] == "uniform" and not 0 < v["disorder.low"] < v["disorder.high"]:
        _err(cfg, "uniform strengths need 0 < low < high", "disorder.low")
    if v["pde.f.kind"] in ("uniform", "smooth") and not 0 < v["pde.f.low"] < v["pde.f.high"]:
        _err(cfg, "strength field needs 0 < low < high", "pde.f.low")
    for k in ("pde.f.value", "pde.f.inner"):
        if v[k] <= 0:
            _err(cfg, "strength must be > 0", k)
    for n in (1, 2):
        name = v[f"sweep.axis{n}.name"]
        if not name:
            continue
        if name not in SCHEMA or SCHEMA[name][0] not in (_finite, int):
            _err(cfg, f"cannot sweep {name!r}: not a numeric config key", f"sweep.axis{n}.name")
        axis_values(cfg, n)
    if v["geometry.kind"] == "lattice":
        from adaptint.lattice import euclidean_lattice

        dims = v["geometry.dims"]
        if not dims or any(d <= 0 for d in dims):
            _err(cfg, f"lattice dims must be positive, got {format_value(dims)}", "geometry.dims")
        try:
            euclidean_lattice(dims, v["geometry.radius"], v["geometry.boundary"], v["geometry.g"])
        except ValueError as exc:
            _err(cfg, f"geometry constraint violated: {exc}", "geometry.radius")


def parse_text(text: str, source: Path | None = None) -> ExperimentConfig:
    values = {k: d for k, (_, d) in SCHEMA.items()}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError("unknown key", key, lineno)
        if key in lines:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key, lineno)
        conv = SCHEMA[key][0]
        try:
            values[key] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"bad value {val!r}: {exc}", key, lineno) from None
        lines[key] = lineno
    cfg = ExperimentConfig(values, lines, source)
    validate(cfg)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_text(path.read_text(), source=path.resolve())


def parse_override(item: str) -> tuple[str, int]:
    """``K=V`` from ``--seed-override``; ``K`` may omit the ``seed.`` prefix."""
    if "=" not in item:
        raise ConfigError(f"seed override must be K=V, got {item!r}")
    k, v = (s.strip() for s in item.split("=", 1))
    key = k if k.startswith("seed.") else f"seed.{k}"
    if key not in SCHEMA:
        raise ConfigError("unknown seed", key)
    try:
        return key, int(v)
    except ValueError:
        raise ConfigError(f"seed must be an integer, got {v!r}", key) from None
