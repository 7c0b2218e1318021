"""Experiment runner.

Subcommands ``simulate-ca``, ``simulate-pde``, ``analyze``, ``consensus`` and
``sweep`` each read a config, write their artifacts to ``--out`` and finish
with ``manifest.txt`` (sha256, size and path of every file).  Outputs depend
only on the config and seeds; ``--threads`` changes speed, never bytes.

Exit codes: 0 success, 2 config error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from scipy import ndimage

from adaptint import analysis, raster
from adaptint.config import SCHEMA, ConfigError, ExperimentConfig, format_value, parse_config, parse_override
from adaptint.dynamics import AgentSystem, NoiseModel, make_initial, run
from adaptint.field import FieldGrid, evolve, stability_bound
from adaptint.integrate import consensus, consensus_pde, embed, ingest
from adaptint.lattice import build_geometry, sample_disorder

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
CONFIG_DIR = Path(__file__).with_name("configs")
COMMANDS = {
    "simulate-ca": "ca",
    "simulate-pde": "pde",
    "analyze": "analyze",
    "consensus": "consensus",
    "sweep": "sweep",
}
MANIFEST = "manifest.txt"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def write_summary(path: Path, items: dict) -> Path:
    return write_csv(path, ["key", "value"], list(items.items()))


def write_clusters(path: Path, report: analysis.ClusterReport, ndim: int, clusters=None) -> Path:
    clusters = report.clusters if clusters is None else clusters
    axes = ["x", "y", "z"][:ndim] if ndim <= 3 else [f"c{k}" for k in range(ndim)]
    header = ["cluster_id", "sign", "size", *[f"centroid_{a}" for a in axes], "boundary_len"]
    rows = []
    for c in clusters:
        cen = list(c.centroid) if c.centroid else [math.nan] * ndim
        rows.append([c.id, c.sign, c.size, *cen, c.boundary_len])
    return write_csv(path, header, rows)


def write_manifest(out: Path) -> Path:
    lines = []
    target = out / MANIFEST
    for p in sorted(q for q in out.rglob("*") if q.is_file() and q != target):
        data = p.read_bytes()
        lines.append(f"{hashlib.sha256(data).hexdigest()}  {len(data)}  {p.relative_to(out).as_posix()}\n")
    path = out / MANIFEST
    path.write_text("".join(lines))
    return path


# builders --------------------------------------------------------------------


def build_system(cfg: ExperimentConfig) -> AgentSystem:
    geom = build_geometry(cfg.geometry_spec())
    st = sample_disorder(cfg.disorder_spec(), geom.n_agents, cfg["seed.disorder"],
                         cfg["disorder.self_esteem"], cfg["dynamics.beta"])
    sigma = make_initial(geom, cfg["initial.kind"], sign=cfg["initial.sign"], m0=cfg["initial.m0"],
                         layout=cfg["initial.layout"], seed=cfg["seed.initial"])
    return AgentSystem(sigma, geom, st)


def build_noise(cfg: ExperimentConfig) -> NoiseModel:
    return NoiseModel(cfg["noise.kind"], cfg["noise.dist"], cfg["noise.amplitude"], cfg["seed.noise"])


def _grid_shape(cfg):
    if cfg["geometry.kind"] != "lattice":
        raise ConfigError("field modes need geometry.kind = lattice", "geometry.kind", cfg.lines.get("geometry.kind"))
    return tuple(cfg["geometry.dims"])


def _centered(shape, dx):
    return [(np.arange(n) - (n - 1) / 2.0) * dx for n in shape]


def build_strength_field(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    shape, dx = _grid_shape(cfg), cfg["pde.dx"]
    kind = cfg["pde.f.kind"]
    lo, hi = cfg["pde.f.low"], cfg["pde.f.high"]
    if kind == "constant":
        return np.full(shape, cfg["pde.f.value"])
    if kind == "uniform":
        return np.random.default_rng(seed).uniform(lo, hi, shape)
    if kind == "smooth":
        noise = np.random.default_rng(seed).standard_normal(shape)
        mode = "wrap" if cfg["geometry.boundary"] == "periodic" else "reflect"
        sm = ndimage.gaussian_filter(noise, cfg["pde.f.corr"], mode=mode)
        span = sm.max() - sm.min()
        return lo + (hi - lo) * (sm - sm.min()) / (span if span > 0 else 1.0)
    if kind == "linear":
        x = np.meshgrid(*_centered(shape, dx), indexing="ij")[0]
        f = cfg["pde.f.value"] + cfg["pde.f.slope"] * x
        if np.any(f <= 0):
            raise ConfigError("linear strength field turns non-positive inside the domain", "pde.f.slope",
                              cfg.lines.get("pde.f.slope"))
        return f
    r2 = sum(c**2 for c in np.meshgrid(*_centered(shape, dx), indexing="ij"))
    return np.where(r2 < cfg["pde.f.radius"] ** 2, cfg["pde.f.inner"], cfg["pde.f.value"])


def build_initial_field(cfg: ExperimentConfig, f: np.ndarray, seed: int) -> np.ndarray:
    kind = cfg["pde.init.kind"]
    if kind == "random":
        return np.random.default_rng(seed).uniform(-1.0, 1.0, f.shape) * cfg["pde.init.amplitude"]
    if kind == "constant":
        return np.full(f.shape, cfg["pde.init.value"])
    if kind == "thomas_fermi":
        gamma = cfg["pde.gamma"]
        if gamma == 0:
            raise ConfigError("thomas_fermi start needs pde.gamma != 0", "pde.init.kind", cfg.lines.get("pde.init.kind"))
        return analysis.thomas_fermi(f, gamma, cfg["pde.init.branch"], seed=seed).v0
    # disk of reversed opinion in a +TF sea
    gamma = cfg["pde.gamma"]
    sea = np.sqrt(np.maximum(f - 1.0, 0.0) / gamma) if gamma > 0 else np.ones_like(f)
    r2 = sum(c**2 for c in np.meshgrid(*_centered(f.shape, cfg["pde.dx"]), indexing="ij"))
    return np.where(r2 < cfg["pde.init.radius"] ** 2, -sea, sea)


def build_grid(cfg: ExperimentConfig, realization: int = 0) -> FieldGrid:
    f = build_strength_field(cfg, cfg["seed.disorder"] + realization)
    v = build_initial_field(cfg, f, cfg["seed.initial"] + realization)
    return FieldGrid(v, f, cfg["pde.gamma"], cfg["pde.alpha"], cfg["pde.dx"], cfg["geometry.boundary"])


def _dt(cfg: ExperimentConfig, grid: FieldGrid) -> float:
    return cfg["pde.dt"] if cfg["pde.dt"] > 0 else cfg["pde.dt_fraction"] * stability_bound(grid)


def _state_raster(sigma: np.ndarray, geometry) -> np.ndarray:
    arr = sigma.astype(np.float64)
    return arr.reshape(geometry.shape) if geometry.kind == "lattice" and not geometry.params.get("induced") else arr


def shipped_config(name: str) -> Path:
    """Path of a config bundled with the package (``name`` with or without ``.cfg``)."""
    path = CONFIG_DIR / (name if name.endswith(".cfg") else f"{name}.cfg")
    if not path.is_file():
        have = sorted(p.stem for p in CONFIG_DIR.glob("*.cfg"))
        raise FileNotFoundError(f"no shipped config {name!r}; have {have}")
    return path


# modes -----------------------------------------------------------------------


def run_ca(cfg: ExperimentConfig, out: Path, threads: int = 1) -> dict:
    system = build_system(cfg)
    traj = run(system, build_noise(cfg), cfg["dynamics.steps"], cfg["output.snapshot_every"],
               cfg["dynamics.rule"], cfg["dynamics.stop_on_cycle"], threads)
    write_csv(out / "trajectory.csv", ["t", "m", "flips"],
              [(t, m, fl) for t, (m, fl) in enumerate(zip(traj.m, traj.flips))])
    if traj.snapshots:
        snap = out / "snapshots"
        snap.mkdir(exist_ok=True)
        for t, sigma in sorted(traj.snapshots.items()):
            raster.write(snap / f"state_t{t:06d}.lmfg", _state_raster(sigma, system.geometry))
    raster.write(out / "final_state.lmfg", _state_raster(traj.final.sigma, system.geometry))
    rep = analysis.detect_clusters(traj.final.sigma, system.geometry)
    write_clusters(out / "clusters.csv", rep, system.geometry.positions.shape[1])
    minority = sum(c.size for c in rep.minority()) / system.n_agents
    summary = {
        "mode": "ca",
        "steps_run": traj.steps,
        "stop": traj.stop,
        "m_final": traj.m[-1],
        "n_clusters": rep.n_clusters,
        "n_minority_clusters": len(rep.minority()),
        "minority_fraction": minority,
    }
    write_summary(out / "summary.csv", summary)
    return {**summary, "eta": math.nan, "phase": "", "P_tot": math.nan, "h_eff": math.nan,
            "max_abs_v": math.nan, "outcome": traj.stop}


def _pde_outcome(res, rep, vmax):
    if res.aborted:
        return "aborted"
    if vmax < 1e-6:
        return "uniform_zero"
    return "uniform" if rep.n_clusters == 1 else "clustered"


def run_pde(cfg: ExperimentConfig, out: Path, threads: int = 1) -> dict:
    grid = build_grid(cfg)
    dt = _dt(cfg, grid)
    every = cfg["output.snapshot_every"]
    snaps = []

    def snapshot(t, g):
        n = int(round(t / dt))
        if every and n % every == 0:
            snaps.append((n, g.v))

    res = evolve(grid, cfg["pde.t_end"], dt, cfg["pde.record_every"], cfg["pde.tol"], observers=(snapshot,))
    write_csv(out / "series.csv", ["t", "H", "max_abs_rhs"], zip(res.times, res.H, res.max_abs_rhs))
    if snaps:
        sd = out / "snapshots"
        sd.mkdir(exist_ok=True)
        for n, v in snaps:
            raster.write(sd / f"field_n{n:07d}.lmfg", v)
    raster.write(out / "final_field.lmfg", res.grid.v)
    raster.write(out / "strength_field.lmfg", grid.f)
    stats = analysis.ensemble_stats([grid.f], grid.alpha, [res.grid.v], grid.dx, grid.boundary,
                                    cfg["analysis.dense_max"], cfg["analysis.middle_max"])
    rep = stats.reports[0]
    write_clusters(out / "clusters.csv", rep, grid.ndim)
    vmax = float(np.max(np.abs(res.grid.v)))
    state = analysis.field_to_state(res.grid.v)
    summary = {
        "mode": "pde",
        "dt": dt,
        "steps_run": res.steps,
        "t_final": res.steps * dt,
        "converged": res.converged,
        "aborted": res.aborted,
        "H_final": res.H[-1],
        "max_abs_v": vmax,
        "m_final": float(np.mean(state)),
        "n_clusters": rep.n_clusters,
        "P_tot": stats.P_tot,
        "h_eff": stats.h_eff,
        "S": stats.S,
        "eta": stats.eta,
        "phase": stats.phase,
        "outcome": _pde_outcome(res, rep, vmax),
    }
    write_summary(out / "summary.csv", summary)
    return summary


def run_analyze(cfg: ExperimentConfig, out: Path, threads: int = 1) -> dict:
    fs, finals = [], []
    for r in range(cfg["analysis.realizations"]):
        grid = build_grid(cfg, r)
        res = evolve(grid, cfg["pde.t_end"], _dt(cfg, grid), cfg["pde.record_every"], cfg["pde.tol"])
        fs.append(grid.f)
        finals.append(res.grid.v)
    stats = analysis.ensemble_stats(fs, cfg["pde.alpha"], finals, cfg["pde.dx"], cfg["geometry.boundary"],
                                    cfg["analysis.dense_max"], cfg["analysis.middle_max"])
    for r, rep in enumerate(stats.reports):
        write_clusters(out / f"clusters_r{r:03d}.csv", rep, len(cfg["geometry.dims"]))
    summary = {
        "mode": "analyze",
        "realizations": len(fs),
        "P_tot": stats.P_tot,
        "h_eff": stats.h_eff,
        "h_eff_realization": stats.h_eff_realization,
        "h_eff_cluster": stats.h_eff_cluster,
        "n_crossings": stats.n_crossings,
        "S": stats.S,
        "eta": stats.eta,
        "phase": stats.phase,
        "no_clusters": stats.no_clusters,
    }
    write_summary(out / "summary.csv", summary)
    return summary


def run_consensus(cfg: ExperimentConfig, out: Path, threads: int = 1) -> dict:
    raw = cfg["consensus.predictions"]
    if not raw:
        raise ConfigError("consensus mode needs a predictions file", "consensus.predictions")
    preds = ingest(cfg.resolve_path(raw))
    system = embed(preds, build_geometry(cfg.geometry_spec()), cfg["consensus.mapping"], cfg["dynamics.beta"])
    if cfg["consensus.relax"] == "pde":
        res = consensus_pde(system, cfg["pde.gamma"], cfg["pde.alpha"], cfg["consensus.f_scale"],
                            cfg["pde.t_end"], cfg["pde.tol"])
        ndim = len(system.geometry.shape)
    else:
        res = consensus(system, build_noise(cfg), cfg["consensus.max_steps"], threads)
        ndim = system.geometry.positions.shape[1]
    summary = {
        "decision": res.decision,
        "p_yes": res.p_yes,
        "p_no": res.p_no,
        "m_final": res.m_final,
        "steps_to_stationarity": res.steps_to_stationarity,
        "stop": res.stop,
        "converged": res.converged,
        "n_minority_clusters": len(res.minority),
    }
    write_summary(out / "consensus.csv", summary)
    write_clusters(out / "minority_clusters.csv", res.report, ndim, res.minority)
    return summary


SWEEP_COLUMNS = ("eta", "phase", "P_tot", "h_eff", "m_final", "max_abs_v", "outcome")


def _coerce(key, value):
    return int(round(value)) if SCHEMA[key][0] is int else float(value)


def run_sweep(cfg: ExperimentConfig, out: Path, threads: int = 1) -> dict:
    axes = cfg.axes()
    if not axes:
        raise ConfigError("sweep needs at least one axis (sweep.axis1.name)", "sweep.axis1.name")
    names = [a for a, _ in axes]
    points = list(itertools.product(*[vals for _, vals in axes]))
    runner = MODES[cfg["sweep.mode"]]

    def one(k_point):
        k, point = k_point
        sub = out / f"point_{k:03d}"
        sub.mkdir(exist_ok=True)
        try:
            pcfg = cfg.with_overrides({n: _coerce(n, x) for n, x in zip(names, point)})
            (sub / "config.echo").write_text(pcfg.echo())
            res = runner(pcfg, sub, 1)
            return [res.get(c, math.nan) for c in SWEEP_COLUMNS] + ["ok"]
        except Exception as exc:  # noqa: BLE001 - recorded per point, sweep continues
            return [math.nan, "", math.nan, math.nan, math.nan, math.nan, "failed",
                    f"error: {type(exc).__name__}: {exc}"]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, enumerate(points)))
    else:
        rows = [one(kp) for kp in enumerate(points)]
    write_csv(out / "sweep_summary.csv", ["point", *names, *SWEEP_COLUMNS, "status"],
              [[k, *point, *row] for k, (point, row) in enumerate(zip(points, rows))])
    failed = sum(1 for r in rows if r[-1] != "ok")
    return {"mode": "sweep", "points": len(points), "failed": failed}


MODES = {"ca": run_ca, "pde": run_pde, "analyze": run_analyze, "consensus": run_consensus, "sweep": run_sweep}


def run_experiment(cfg: ExperimentConfig, out, threads: int = 1) -> dict:
    """Run ``cfg['mode']`` into ``out`` and write the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo").write_text(cfg.echo())
    result = MODES[cfg["mode"]](cfg, out, threads)
    write_manifest(out)
    return result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptint", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path,
                       help="config file, or the name of a shipped config")
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed-override", action="append", default=[], metavar="K=V")
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    mode = COMMANDS[args.command]
    try:
        path = args.config
        if not path.exists() and path.parent == Path("."):
            try:
                path = shipped_config(path.name)
            except FileNotFoundError:
                pass
        cfg = parse_config(path)
        if "mode" in cfg.lines and cfg["mode"] != mode:
            raise ConfigError(f"config says mode = {cfg['mode']} but command is {args.command}", "mode",
                              cfg.lines["mode"])
        overrides = dict(parse_override(item) for item in args.seed_override)
        cfg = cfg.with_overrides({**overrides, "mode": mode})
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(cfg, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for k, v in result.items():
        print(f"{k} = {format_value(v) if not isinstance(v, np.floating) else repr(float(v))}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
