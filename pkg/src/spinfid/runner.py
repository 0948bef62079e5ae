"""Batch execution of run configs into reproducible output directories."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, _kernels, analysis, chaos, classical, quantum, twospin
from .analysis import FidTrace
from .config import RunConfig
from .geometry import SpinGeometry, build_cubic, build_explicit

__all__ = ["execute", "sweep", "manifest_path", "worker_count"]

log = logging.getLogger(__name__)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SPINFID_WORKERS", "1")))
    except ValueError:
        return 1


def _geometry(cfg: RunConfig) -> SpinGeometry:
    if cfg.coords is not None:
        return build_explicit(cfg.coords)
    return build_cubic(*cfg.lattice)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def manifest_path(run_dir) -> Path:
    return Path(run_dir) / "manifest.json"


def _trace_metrics(cfg: RunConfig, trace: FidTrace, out: Path, labels) -> dict:
    metrics: dict = {}
    trace.to_csv(out / "trace.csv", header=labels)
    env = analysis.envelope(trace)
    t_star = None
    if cfg.t_star or cfg.fit:
        t_star = analysis.first_zero(trace.t, env, cfg.t_star_threshold)
        metrics["t_star"] = t_star
    if cfg.dft:
        spec = analysis.spectrum(trace.sx, trace.dt, cfg.resolution or None)
        spec.to_csv(out / "spectrum.csv")
        metrics["spectrum_resolution"] = spec.resolution
        try:
            metrics["spectral_width"] = analysis.spectral_width(spec)
        except ValueError:
            metrics["spectral_width"] = None
    if cfg.fit and t_star is not None and 2 * t_star <= trace.t[-1]:
        signed = analysis.demodulate(trace).real
        fit = analysis.fit_abragam(trace.t, signed, t_star=t_star)
        (out / "fit.json").write_text(json.dumps(fit.as_dict(), indent=2, sort_keys=True) + "\n")
        metrics["fit"] = fit.as_dict()
    elif cfg.fit:
        metrics["fit"] = None
    return metrics


def _run_quantum(cfg: RunConfig, out: Path) -> dict:
    g = _geometry(cfg)
    qc = quantum.QuantumConfig(g, cfg.p_d, secular_only=cfg.secular_only)
    es = quantum.prepare(qc)
    np.savetxt(out / "eigenvalues.csv", np.column_stack([np.arange(es.energies.size), es.energies]),
               delimiter=",", header="index,energy", comments="", fmt=["%d", "%.17g"])
    trace = quantum.evolve_expectations(es, quantum.default_time_grid(cfg.t_max, cfg.dt))
    metrics = _trace_metrics(cfg, trace, out, ("t", "sx", "sy", "sz"))
    metrics["n_states"] = int(es.energies.size)
    return metrics


def _initial(cfg: RunConfig, g: SpinGeometry) -> classical.ClassicalSpinState:
    spec = classical.InitialDistributionSpec(cfg.init, cfg.s, cfg.seed)
    state = classical.initial_state(g, spec)
    if cfg.perturb > 0:
        state = classical.perturb(state, cfg.perturb, cfg.perturb_seed)
    return state


def _run_classical(cfg: RunConfig, out: Path) -> dict:
    g = _geometry(cfg)
    state = _initial(cfg, g)
    if cfg.frame == "rotating_secular":
        res = classical.integrate_rotating_secular(state, g, cfg.p_d, cfg.t_max, cfg.dt)
    else:
        res = classical.integrate(state, g, cfg.p_d, cfg.t_max, cfg.dt, secular_only=cfg.secular_only)
    metrics = _trace_metrics(cfg, res.trace, out, ("t", "ex", "ey", "ez"))
    metrics["step_stats"] = res.step_stats.as_dict()
    metrics["initial_polarization"] = state.polarization().tolist()
    return metrics


def _run_lyapunov(cfg: RunConfig, out: Path) -> dict:
    g = _geometry(cfg)
    state = _initial(cfg, g)
    series = chaos.lyapunov(state, g, cfg.p_d, cfg.t_max, T=cfg.T,
                            rescale_interval=cfg.rescale_interval,
                            sample_interval=cfg.sample_interval, seed=cfg.seed,
                            secular_only=cfg.secular_only)
    series.to_csv(out / "lyapunov.csv")
    return {"L": series.L_inf_estimate, "log_growth": float(series.log_growth[-1]),
            "step_stats": series.step_stats.as_dict(),
            "initial_polarization": state.polarization().tolist()}


def twospin_report(cfg: RunConfig) -> dict:
    if cfg.mode == "period":
        return {"mode": "period", "E": cfg.E, "value": twospin.period_T(cfg.E)}
    if cfg.mode == "c2":
        return {"mode": "c2", "E": cfg.E, "tau": cfg.tau, "value": float(twospin.c_of_tau(cfg.E, cfg.tau))}
    if cfg.mode == "sx":
        return {"mode": "sx", "t": cfg.tau, "p_d": cfg.p_d,
                "value": float(twospin.quantum_sx(cfg.tau, cfg.p_d))}
    rep = twospin.two_spin_eigs(cfg.p_d)
    return {"mode": "eigs", "p_d": cfg.p_d, "energies": rep["energies"].tolist(),
            "analytic_energies": rep["analytic_energies"].tolist(),
            "tabulated_energies": rep["tabulated_energies"].tolist(),
            "shift_ratio": list(rep["shift_ratio"]), "alpha": rep["alpha"],
            "tabulated_alpha": rep["tabulated_alpha"]}


def _run_twospin(cfg: RunConfig, out: Path) -> dict:
    rep = twospin_report(cfg)
    (out / "oracle.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return {"oracle": rep}


def _run_compare(cfg: RunConfig, out: Path) -> dict:
    a = FidTrace.from_csv(cfg.trace_a)
    b = FidTrace.from_csv(cfg.trace_b)
    rep = analysis.compare(a, b, resolution=cfg.resolution or None)
    (out / "compare.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return {"compare": rep}


_ENGINES = {
    "quantum": _run_quantum,
    "classical": _run_classical,
    "lyapunov": _run_lyapunov,
    "twospin": _run_twospin,
    "compare": _run_compare,
}


def execute(cfg: RunConfig, base_dir: Optional[Path] = None) -> Path:
    """Run one config; returns the run directory (named by engine and config hash)."""
    base = Path(base_dir if base_dir is not None else cfg.output_dir)
    out = base / f"{cfg.engine}-{cfg.digest()}"
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    metrics = _ENGINES[cfg.engine](cfg, out)
    wall = time.perf_counter() - start
    files = sorted(p for p in out.iterdir() if p.name != "manifest.json")
    manifest = {
        "artifact_version": __version__,
        "backend": _kernels.backend(),
        "config": cfg.resolved(),
        "config_digest": cfg.digest(),
        "wall_clock_s": wall,
        "metrics": metrics,
        "checksums": {p.name: _sha256(p) for p in files},
    }
    manifest_path(out).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("run %s finished in %.1f s", out.name, wall)
    return out


def sweep(cfg: RunConfig, base_dir: Optional[Path] = None, workers: Optional[int] = None) -> Path:
    """One run per value of ``cfg.sweep_param`` plus a summary.csv."""
    base = Path(base_dir if base_dir is not None else cfg.output_dir)
    key = cfg.sweep_param
    points = [cfg.with_value(key, _coerce(cfg, key, v)) for v in cfg.sweep_values]
    digest = hashlib.sha256("".join(p.digest() for p in points).encode()).hexdigest()[:12]
    sweep_dir = base / f"sweep-{key}-{digest}"
    sweep_dir.mkdir(parents=True, exist_ok=True)
    workers = workers or worker_count()
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            run_dirs = [Path(p) for p in pool.map(_execute_point, [(p, str(sweep_dir)) for p in points])]
    else:
        run_dirs = [execute(p, sweep_dir) for p in points]
    with open(sweep_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([key, "t_star", "L", "A", "a", "b", "run_dir"])
        for point, rd in zip(points, run_dirs):
            m = json.loads(manifest_path(rd).read_text())["metrics"]
            fit = m.get("fit") or {}
            w.writerow([_fmt(getattr(point, key)), _fmt(m.get("t_star")), _fmt(m.get("L")),
                        _fmt(fit.get("A")), _fmt(fit.get("a")), _fmt(fit.get("b")), rd.name])
    return sweep_dir


def _execute_point(args):
    point, base = args
    return str(execute(point, Path(base)))


def _coerce(cfg: RunConfig, key, value):
    current = getattr(cfg, key)
    if isinstance(current, float) and isinstance(value, int):
        return float(value)
    if isinstance(value, list):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return json.dumps(v)
    return str(v)
