"""Command-line front end: presets, pipeline orchestration, and data products.

A run is described by a flat key/value config (JSON file and/or command-line
overrides), with every frequency and rate quoted in units of the mechanical
frequency Omega.  Each emitted data file embeds the fully resolved config for
provenance, and rerunning an emitted config reproduces the stochastic outputs
bit-for-bit.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 insufficient
statistics, 5 unconverged results (suppressed by --allow-unconverged).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from omjump import __version__, cascade, counting, lindblad, trajectory
from omjump.operators import (HamiltonianKind, HilbertDims, SystemParams,
                              build_hamiltonian)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_STATS = 4
EXIT_UNCONVERGED = 5

TASKS = ("steady", "g2", "trajectories", "counting", "cascade-map", "sweep")

_KIND_NAMES = {
    "optomechanical": HamiltonianKind.OPTOMECHANICAL,
    "polaron": HamiltonianKind.POLARON_TRANSFORMED,
    "kerr": HamiltonianKind.KERR_CAVITY,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Flat, losslessly serializable description of one run."""

    task: str = ""
    seed: int = 12345
    workers: int = 1
    out: str = "out"
    # physical parameters, in units of Omega
    detuning: float = 0.0
    g0: float = 0.0
    alpha_L: float = 0.0
    kappa_in: float = 0.0625
    kappa_out: float = 0.0625
    gamma_m: float = 1e-3
    n_th: float = 0.0
    eta: float = 1.0
    omega_m: float = 1.0
    n_photon_max: int = 6
    n_phonon_max: int = 20
    hamiltonian: str = "optomechanical"
    # trajectory / counting options
    t_total: float = 0.0
    n_traj: int = 16
    dt: float = 0.0
    sample_stride: int = 10
    initial: str = "steady"
    burn_in: float = 0.0
    trace_stride: float = 0.0
    # delay / window grids
    tau_min: float = 1e-2
    tau_max: float = 0.0
    tau_points: int = 200
    tau_spacing: str = "log"
    t_s_min: float = 0.0
    t_s_max: float = 0.0
    t_s_points: int = 20
    t_s_ref: float = 0.0
    target_windows: int = 150
    tail_tol: float = 1e-3
    # cascade options
    cascade_n: int = 2
    margin_1: float = 1.0
    margin_2: float = 5.0
    margin_3: float = 5.0
    alpha_min: float = 0.01
    alpha_max: float = 0.5
    alpha_points: int = 40
    g0_min: float = 0.3
    g0_max: float = 1.2
    g0_points: int = 40
    g0_over_kappa: float = 4.0
    sweep_parameter: str = "alpha_L"
    sweep_values: list = field(default_factory=list)

    def params(self) -> SystemParams:
        return SystemParams(detuning=self.detuning, g0=self.g0, alpha_L=self.alpha_L,
                            kappa_in=self.kappa_in, kappa_out=self.kappa_out,
                            gamma_m=self.gamma_m, n_th=self.n_th, eta=self.eta,
                            omega_m=self.omega_m)

    def dims(self) -> HilbertDims:
        return HilbertDims(self.n_photon_max, self.n_phonon_max)

    def kind(self) -> HamiltonianKind:
        if self.hamiltonian not in _KIND_NAMES:
            raise ConfigError(f"unknown hamiltonian {self.hamiltonian!r}")
        return _KIND_NAMES[self.hamiltonian]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


# parameters and cutoffs of the paper-figure scenarios, in units of Omega
PRESETS: dict[str, dict] = {
    # sideband-resolved photon-blockade point (Figs. 2a-c, 3)
    "fig2a": dict(detuning=1.0 - 0.25, g0=0.5, alpha_L=5e-3,
                  kappa_in=0.0625, kappa_out=0.0625, gamma_m=1e-3, n_th=0.0,
                  eta=1.0, n_photon_max=4, n_phonon_max=16),
    # bad-cavity control (Figs. 2d-f)
    "fig2d": dict(detuning=1.0 - 0.25, g0=0.5, alpha_L=5e-3,
                  kappa_in=2.5, kappa_out=2.5, gamma_m=1e-3, n_th=0.0,
                  eta=1.0, n_photon_max=3, n_phonon_max=10),
    # two-photon cascade point (Figs. 4-6): Delta = -2 g0^2, g0 = 1/sqrt(2), kappa = g0/4
    "fig5": dict(detuning=-1.0, g0=0.7071067811865476, alpha_L=0.15,
                 kappa_in=0.08838834764831843, kappa_out=0.08838834764831843,
                 gamma_m=1e-3, n_th=0.0, eta=1.0,
                 n_photon_max=6, n_phonon_max=20, cascade_n=2),
    # mechanical-damping sweep at the cascade point (Fig. 5d)
    "fig5d": dict(detuning=-1.0, g0=0.7071067811865476, alpha_L=0.15,
                  kappa_in=0.08838834764831843, kappa_out=0.08838834764831843,
                  gamma_m=1e-3, n_th=0.0, eta=1.0,
                  n_photon_max=6, n_phonon_max=20, cascade_n=2,
                  sweep_parameter="gamma_m",
                  sweep_values=[1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.17677669529663687]),
    # three-photon resonance (Fig. 7a): Delta = -3 g0^2, g0 = 1/2, g0/kappa = 4
    "fig7a": dict(detuning=-0.75, g0=0.5, alpha_L=0.18,
                  kappa_in=0.0625, kappa_out=0.0625, gamma_m=1e-3, n_th=0.0,
                  eta=1.0, n_photon_max=8, n_phonon_max=20, cascade_n=3),
    # finite-temperature cascade comparison (Fig. 7b)
    "fig7b": dict(detuning=-1.0, g0=0.7071067811865476, alpha_L=0.15,
                  kappa_in=0.08838834764831843, kappa_out=0.08838834764831843,
                  gamma_m=1e-3, n_th=0.0, eta=1.0,
                  n_photon_max=6, n_phonon_max=24, cascade_n=2,
                  sweep_parameter="n_th", sweep_values=[0.0, 0.1, 1.0]),
    # regime map (Fig. 4b): n = 2 at fixed g0/kappa = 4
    "fig4b": dict(cascade_n=2, g0=0.7071067811865476, g0_over_kappa=4.0,
                  alpha_min=0.02, alpha_max=0.6, alpha_points=60,
                  g0_min=0.3, g0_max=1.2, g0_points=46),
}


def load_config(path: str | None, preset: str | None,
                overrides: dict) -> RunConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                data.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; "
                              f"choose from {sorted(PRESETS)}")
        merged = dict(PRESETS[preset])
        merged.update(data)
        data = merged
    data.update(overrides)
    return RunConfig.from_dict(data)


def provenance(cfg: RunConfig) -> str:
    return (f"omjump {__version__}\n"
            f"config: {json.dumps(cfg.to_dict(), sort_keys=True)}")


def _write_json(path: Path, cfg: RunConfig, results: dict) -> None:
    payload = {"omjump": __version__, "config": cfg.to_dict(), "results": results}
    path.write_text(json.dumps(payload, sort_keys=True, indent=1,
                               default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _write_csv(path: Path, cfg: RunConfig, header: str, rows) -> None:
    with open(path, "w") as fh:
        for line in provenance(cfg).splitlines():
            fh.write(f"# {line}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.12g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _build(cfg: RunConfig):
    p = cfg.params()
    dims = cfg.dims()
    if cfg.kind() is HamiltonianKind.KERR_CAVITY:
        dims = HilbertDims(dims.n_photon_max, 0)
    h = build_hamiltonian(p, dims, cfg.kind())
    return p, dims, h


def _steady(cfg: RunConfig, p, dims, h):
    liou = lindblad.assemble_liouvillian(p, h, dims)
    rho = lindblad.steady_state(liou)
    return liou, rho


def task_steady(cfg: RunConfig, out: Path) -> dict:
    p, dims, h = _build(cfg)
    liou, rho = _steady(cfg, p, dims, h)
    nbar = float(np.real(rho.expect(liou.n_a)))
    from omjump.operators import build_annihilation
    b = build_annihilation(dims, "phonon")
    n_phonon = float(np.real(rho.expect(b.conj().T @ b)))
    tail_photon, tail_phonon = rho.tail_occupation()
    purity = float(np.real(np.trace(rho.matrix @ rho.matrix)))
    results = {"nbar": nbar, "n_phonon": n_phonon, "purity": purity,
               "tail_photon": tail_photon, "tail_phonon": tail_phonon,
               "detection_rate": p.eta * p.kappa_out * nbar,
               "residual": float(np.linalg.norm(liou.matrix @ rho.vec()))}
    _write_json(out / "steady.json", cfg, results)
    pops = np.real(np.diag(rho.matrix))
    n_a, n_b = dims.occupations()
    _write_csv(out / "populations.csv", cfg, "n_photon,n_phonon,population",
               [(int(n_a[i]), int(n_b[i]), float(pops[i])) for i in range(dims.dim)])
    results["unconverged"] = tail_photon > cfg.tail_tol or \
        (dims.n_phonon_max > 0 and tail_phonon > cfg.tail_tol)
    return results


def task_g2(cfg: RunConfig, out: Path) -> dict:
    p, dims, h = _build(cfg)
    liou, rho = _steady(cfg, p, dims, h)
    tau_max = cfg.tau_max if cfg.tau_max > 0 else \
        (10.0 / p.gamma_m if p.gamma_m > 0 else 1e4)
    if cfg.tau_spacing == "log":
        tau = np.concatenate([[0.0], np.geomspace(cfg.tau_min, tau_max, cfg.tau_points)])
    elif cfg.tau_spacing == "linear":
        tau = np.linspace(0.0, tau_max, cfg.tau_points)
    else:
        raise ConfigError("tau_spacing must be 'log' or 'linear'")
    curve = lindblad.g2_of_tau(liou, rho, tau)
    _write_csv(out / "g2.csv", cfg, "tau,g2",
               [(float(t), float(v)) for t, v in zip(curve.delays, curve.values)])
    results = {"nbar": curve.nbar, "g2_zero": float(curve.values[0]),
               "detection_rate": p.eta * p.kappa_out * curve.nbar,
               "g2_final": float(curve.values[-1])}
    _write_json(out / "g2.json", cfg, results)
    return results


def task_trajectories(cfg: RunConfig, out: Path) -> dict:
    p, dims, h = _build(cfg)
    t_total = cfg.t_total if cfg.t_total > 0 else 5.0 / max(p.gamma_m, 1e-6)
    initial = cfg.initial
    if initial == "post-jump":
        liou, rho = _steady(cfg, p, dims, h)
        a = liou.a
        jumped = a @ rho.matrix @ a.conj().T.toarray()
        initial = lindblad.DensityMatrix(dims, jumped / np.trace(jumped).real)
    tcfg = trajectory.TrajectoryConfig(
        seed=cfg.seed, t_total=t_total,
        dt=cfg.dt if cfg.dt > 0 else None,
        sample_stride=cfg.sample_stride, initial_state=initial,
        burn_in=cfg.burn_in)
    records = trajectory.run_ensemble(p, h, tcfg, cfg.n_traj,
                                      workers=cfg.workers, dims=dims)
    for i, rec in enumerate(records):
        rec.to_csv(out / f"traj_{i:03d}.csv", provenance(cfg))
    results = {"n_traj": len(records),
               "n_jumps": [rec.n_jumps for rec in records],
               "dt": records[0].dt, "t_total": t_total}
    _write_json(out / "trajectories.json", cfg, results)
    return results


def task_counting(cfg: RunConfig, out: Path) -> dict:
    p, dims, h = _build(cfg)
    liou, rho = _steady(cfg, p, dims, h)
    nbar = float(np.real(rho.expect(liou.n_a)))
    tail_photon, tail_phonon = rho.tail_occupation()

    t_s_max = cfg.t_s_max if cfg.t_s_max > 0 else \
        (10.0 / p.gamma_m if p.gamma_m > 0 else 100.0 / p.kappa)
    t_s_min = cfg.t_s_min if cfg.t_s_min > 0 else 0.1 / p.kappa
    t_s_grid = np.geomspace(t_s_min, t_s_max, cfg.t_s_points)

    t_total = cfg.t_total if cfg.t_total > 0 else \
        np.ceil(cfg.target_windows / cfg.n_traj) * t_s_max + t_s_max
    records = trajectory.sample_detection_records(
        p, h, dims, rho, seed=cfg.seed, t_total=t_total, n_traj=cfg.n_traj)

    _write_csv(out / "detections.csv", cfg, "trajectory,t",
               [(i, float(t)) for i, rec in enumerate(records)
                for t in rec.jump_times])

    curve = counting.fano_curve(records, t_s_grid)
    _write_csv(out / "fano_curve.csv", cfg, "t_s,fano,err,mean,third,third_err,ok",
               [(float(curve.t_s[i]), float(curve.fano[i]), float(curve.err[i]),
                 float(curve.mean[i]), float(curve.third[i]),
                 float(curve.third_err[i]), int(curve.ok[i]))
                for i in range(len(curve.t_s))])

    plateau = counting.fano_infinity(records, t_s_grid[-4:])
    t_s_ref = cfg.t_s_ref if cfg.t_s_ref > 0 else t_s_grid[-1]
    hist = counting.counting_statistics(records, t_s_ref)
    _write_csv(out / "histogram.csv", cfg, "n,probability",
               [(n, float(prob)) for n, prob in enumerate(hist.probabilities)])

    rate, rate_err = counting.mean_detection_rate(records)
    results = {"nbar": nbar, "detection_rate": rate, "rate_err": rate_err,
               "expected_rate": p.eta * p.kappa_out * nbar,
               "fano_inf": plateau.value, "fano_inf_err": plateau.err,
               "fano_inf_converged": plateau.converged,
               "third_moment": plateau.third, "third_err": plateau.third_err,
               "n_detections": sum(r.n_jumps for r in records),
               "t_total_per_traj": float(t_total),
               "tail_photon": tail_photon, "tail_phonon": tail_phonon,
               "shot_noise_zero_freq": counting.shot_noise_zero_freq(plateau.value, rate)}
    _write_json(out / "counting.json", cfg, results)
    results["unconverged"] = (not plateau.converged) or tail_photon > cfg.tail_tol \
        or (dims.n_phonon_max > 0 and tail_phonon > cfg.tail_tol)
    return results


def task_cascade_map(cfg: RunConfig, out: Path) -> dict:
    alpha = np.geomspace(cfg.alpha_min, cfg.alpha_max, cfg.alpha_points)
    g0s = np.linspace(cfg.g0_min, cfg.g0_max, cfg.g0_points)
    margins = (cfg.margin_1, cfg.margin_2, cfg.margin_3)
    rmap = cascade.regime_map(cfg.cascade_n, cfg.g0_over_kappa, alpha, g0s, margins)
    rmap.to_csv(out / "regime_map.csv", provenance(cfg))
    window = cascade.cascade_alpha_window(
        cfg.cascade_n, cfg.g0, cfg.g0 / cfg.g0_over_kappa, margins) \
        if cfg.g0 > 0 else (float("nan"), float("nan"))
    results = {"n": cfg.cascade_n, "cells": int(rmap.label.size),
               "cascade_cells": int(rmap.in_cascade.sum()),
               "window_alpha_lo": window[0], "window_alpha_hi": window[1]}
    _write_json(out / "regime_map.json", cfg, results)
    return results


def task_sweep(cfg: RunConfig, out: Path) -> dict:
    if not cfg.sweep_values:
        raise ConfigError("sweep task needs sweep_values")
    points = cascade.cascade_sweep(
        cfg.cascade_n, cfg.params(), cfg.sweep_parameter, cfg.sweep_values,
        cfg.dims(), cfg.kind(), seed=cfg.seed, n_traj=cfg.n_traj,
        target_windows=cfg.target_windows, tail_tol=cfg.tail_tol,
        workers=cfg.workers)
    cascade.sweep_to_csv(points, out / "sweep.csv", cfg.sweep_parameter,
                         provenance(cfg))
    results = {"sweep_parameter": cfg.sweep_parameter,
               "values": [pt.sweep_value for pt in points],
               "fano_inf": [pt.fano_inf for pt in points],
               "fano_err": [pt.fano_err for pt in points],
               "nbar": [pt.nbar for pt in points],
               "converged": [pt.converged for pt in points]}
    _write_json(out / "sweep.json", cfg, results)
    results["unconverged"] = not all(pt.converged for pt in points)
    return results


_TASK_RUNNERS = {
    "steady": task_steady,
    "g2": task_g2,
    "trajectories": task_trajectories,
    "counting": task_counting,
    "cascade-map": task_cascade_map,
    "sweep": task_sweep,
}


def _parse_overrides(pairs: list[str]) -> dict:
    out: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omjump",
        description="Photon counting statistics of a driven optomechanical cavity "
                    "(all rates in units of the mechanical frequency Omega).")
    sub = parser.add_subparsers(dest="command")
    run = sub.add_parser("run", help="execute one task from a config file and/or preset")
    run.add_argument("config", nargs="?", help="flat JSON key/value config file")
    run.add_argument("--preset", help=f"named parameter set: {', '.join(sorted(PRESETS))}")
    run.add_argument("--task", choices=TASKS, help="pipeline stage to run")
    run.add_argument("--seed", type=int, help="master RNG seed")
    run.add_argument("--workers", type=int, help="worker processes for ensembles/sweeps")
    run.add_argument("--out", help="output directory")
    run.add_argument("--allow-unconverged", action="store_true",
                     help="exit 0 even when convergence diagnostics fail")
    run.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="override any config key (JSON value)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_OK

    try:
        overrides = _parse_overrides(args.overrides)
        for key in ("task", "seed", "workers", "out"):
            value = getattr(args, key)
            if value is not None:
                overrides[key] = value
        cfg = load_config(args.config, args.preset, overrides)
        if not cfg.task:
            parser.parse_args(["run", "--help"])
            return EXIT_OK
        if cfg.task not in _TASK_RUNNERS:
            raise ConfigError(f"unknown task {cfg.task!r}; choose from {TASKS}")
        cfg.params()   # validate physical parameters early
        cfg.dims()
        cfg.kind()
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")

    try:
        results = _TASK_RUNNERS[cfg.task](cfg, out)
    except counting.InsufficientWindowsError as exc:
        print(f"statistics insufficiency: {exc}", file=sys.stderr)
        return EXIT_STATS
    except (lindblad.SteadyStateError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    if results.get("unconverged") and not args.allow_unconverged:
        print("unconverged results (rerun with --allow-unconverged to accept)",
              file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
