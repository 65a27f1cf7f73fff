"""
Experiment drivers behind the command line.

Each ``run_*`` function writes its CSV/JSON files into ``out_dir`` and
returns ``(exit_code, report)``.  Reports carry ``schema: 1`` and contain no
timestamps or timings, so identical arguments give byte-identical files.
"""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import builtins
from .config import (ConfigError, bundled, load_gains, load_system, load_toml,
                     number)
from .design import (CertificateRefused, ObserverGains, ReducedGains,
                     box_samples, check_assumption4, check_assumption4prime,
                     compute_h, finite_time_certificate)
from .model import decompose, lipschitz_spot_check
from .simulate import (SignMode, SimConfig,
                       SimulationDiverged, chattering_index, convergence_time,
                       simulate_bounded_h, simulate_reduced,
                       simulate_scalar_sliding)

__all__ = ["run_example1", "run_example2", "run_check", "run_reduced_demo",
           "write_json"]

SCHEMA = 1
log = logging.getLogger(__name__)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out(out_dir) -> Path:
    p = Path(out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _slug(label: str) -> str:
    return label.replace(":", "_").replace(".", "p")


# ---------------------------------------------------------------- example 1

def run_example1(out_dir, step: Optional[float] = None,
                 horizon: Optional[float] = None, scheme: Optional[str] = None,
                 variants: Optional[list] = None, jobs: int = 4,
                 config=None):
    doc = load_toml(config or bundled("example1.toml"))
    mu = builtins.lookup(doc.get("mu", "example1_mu"))
    gain = number(doc, "gain", "example1")
    x0 = number(doc, "x0", "example1")
    step = step or number(doc, "step", "example1")
    horizon = horizon or number(doc, "horizon", "example1")
    scheme = scheme or doc.get("scheme", "euler")
    labels = variants or doc["variants"]
    modes = [SignMode.parse(v) for v in labels]
    out = _out(out_dir)

    def one(mode: SignMode):
        cfg = SimConfig(horizon, step, scheme=scheme, sign_mode=mode)
        traj = simulate_scalar_sliding(mu, gain, x0, cfg)
        name = f"example1_{_slug(mode.label())}.csv"
        traj.to_csv(out / name)
        return mode.label(), {
            "csv": name,
            "chattering": chattering_index(traj, "x_1", 0.5),
            "convergence_time_1e-4": convergence_time(traj, "x_1", 1e-4),
            "terminal_abs_x": abs(float(traj.x[-1, 0])),
        }

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = dict(pool.map(one, modes))
    report = {"schema": SCHEMA, "command": "example1", "gain": gain, "x0": x0,
              "step": step, "horizon": horizon, "scheme": scheme,
              "variants": results}
    write_json(out / "example1_metrics.json", report)
    return 0, report


# ---------------------------------------------------------------- example 2

def _samples(spec, seed=None):
    d = spec.system.dims
    return box_samples(d.n, d.r, spec.state_box, spec.input_box,
                       spec.n_samples, spec.seed if seed is None else seed)


def run_example2(out_dir, step: Optional[float] = None,
                 horizon: Optional[float] = None, sign_mode: Optional[str] = None,
                 beta: Optional[float] = None, gamma: Optional[float] = None,
                 seed: Optional[int] = None, scheme: Optional[str] = None,
                 coordinates: Optional[str] = None, system_file=None,
                 gains_file=None):
    spec = load_system(system_file or bundled("example2_system.toml"))
    gspec = load_gains(gains_file or bundled("example2_gains.toml"))
    sys_, bounds = spec.system, spec.bounds
    g = gspec.observer
    if g is None:
        raise ConfigError("example2 needs an [observer] gains table")
    if beta is not None:
        g = ObserverGains(g.P, g.L, g.K, beta, g.epsilon)
    simt = gspec.simulation
    mode = SignMode.parse(sign_mode or simt.get("sign_mode", "exact"))
    cfg = SimConfig(horizon or float(simt.get("horizon", 60.0)),
                    step or float(simt.get("step", 1e-3)),
                    scheme=scheme or simt.get("scheme", "euler"),
                    sign_mode=mode,
                    coordinates=coordinates or simt.get("coordinates", "state"))
    cross_tol = float(simt.get("cross_tol", 1e-3))
    samples = _samples(spec, seed)
    out = _out(out_dir)

    gamma_reduced = gamma if gamma is not None else (
        gspec.gamma if gspec.gamma is not None else bounds.L1)
    checks = {}
    for gm in (gamma_reduced, bounds.gamma):
        checks[f"gamma={gm:g}"] = check_assumption4(sys_, g, bounds, gm,
                                                    samples)
    main_check = checks[f"gamma={gamma_reduced:g}"]
    hf = compute_h(sys_, g.P, sys_.F, samples)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lip = lipschitz_spot_check(sys_, bounds, samples,
                                   rng=spec.seed if seed is None else seed)
    lip["warnings"] = [str(w.message) for w in caught]

    x0, xhat0 = gspec.initial["x0"], gspec.initial["xhat0"]
    e0 = xhat0 - x0
    V0 = float(e0 @ g.P @ e0)

    def certify(W_t1=None):
        return finite_time_certificate(sys_, g, bounds, V0, W_t1,
                                       report=main_check, enforce_range=False)

    cert, cert_info = None, {}
    try:
        cert = certify()
    except CertificateRefused as exc:
        cert_info = {"refused": str(exc)}
        log.warning("certificate refused: %s", exc)

    sim_info: dict = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            traj = simulate_bounded_h(sys_, g, bounds, cfg, x0, xhat0,
                                      cross_tol=cross_tol, certificate=cert,
                                      strict=False)
        except SimulationDiverged as exc:
            traj = None
            sim_info["diverged"] = str(exc)
    sim_info["warnings"] = [str(w.message) for w in caught]

    if traj is not None:
        traj.to_csv(out / "example2_trajectory.csv")
        sim_info.update({
            "csv": "example2_trajectory.csv",
            "first_crossing_time": traj.info["first_crossing_time"],
            "cross_tol": cross_tol,
            "e_norm_final": float(traj.e_norm[-1]),
            "ey_norm_final": float(traj.ey_norm[-1]),
            "convergence_time_e_norm_1e-1": convergence_time(traj, "e_norm", 0.1),
            "chattering_correction": chattering_index(traj, "correction_1", 0.5),
            "chattering_omega_hat": chattering_index(traj, "omega_hat", 0.5),
            "chattering_omega_hat_minus_omega": chattering_index(
                traj, lambda tr: (tr.omega_hat - tr.omega)[:, 0], 0.5),
        })
        if cert is not None:
            ratio = traj.e_norm / cert.envelope(traj.times - traj.times[0])
            sim_info["envelope_max_ratio"] = float(np.max(ratio))
            if cert.t1 <= traj.times[-1] - traj.times[0]:
                k = int(np.searchsorted(traj.times - traj.times[0], cert.t1))
                cert = certify(float(traj.W[k]))
            sim_info["tf_bound"] = cert.tf_bound
            first = traj.info["first_crossing_time"]
            sim_info["within_tf_bound"] = (first is not None
                                           and first <= cert.tf_bound)
    if cert is not None:
        cert_info = cert.to_dict()

    report = {
        "schema": SCHEMA, "command": "example2",
        "system": sys_.name, "sign_mode": mode.label(), "beta": g.beta,
        "step": cfg.h_step, "horizon": cfg.t_end, "scheme": cfg.scheme,
        "coordinates": cfg.coordinates,
        "checks": {k: v.to_dict() for k, v in checks.items()},
        "h": {"bound_sampled": hf.bound, "max_residual": hf.max_residual,
              "L4_declared": bounds.L4},
        "lipschitz": lip,
        "V0": V0,
        "certificate": cert_info,
        "simulation": sim_info,
    }
    write_json(out / "example2_report.json", report)
    return 0, report


# ---------------------------------------------------------------- check

def run_check(system_file, gains_file, gamma: Optional[float] = None,
              state_box=None, input_box=None, seed: Optional[int] = None,
              out_dir=None):
    spec = load_system(system_file)
    gspec = load_gains(gains_file)
    if state_box is not None:
        spec.state_box = tuple(state_box)
    if input_box is not None:
        spec.input_box = tuple(input_box)
    samples = _samples(spec, seed)
    report = {"schema": SCHEMA, "command": "check", "system": spec.system.name}
    ok = True
    if gspec.observer is not None:
        gm = gamma if gamma is not None else (
            gspec.gamma if gspec.gamma is not None else spec.bounds.gamma)
        r = check_assumption4(spec.system, gspec.observer, spec.bounds, gm,
                              samples)
        report["observer"] = r.to_dict()
        ok &= r.passed
    if gspec.reduced is not None:
        dec = decompose(spec.system, gspec.q)
        r = check_assumption4prime(dec, gspec.reduced, spec.bounds, samples)
        report["reduced"] = r.to_dict()
        ok &= r.passed
    report["pass"] = bool(ok)
    if out_dir is not None:
        write_json(_out(out_dir) / "check.json", report)
    return (0 if ok else 1), report


# ---------------------------------------------------------------- reduced

def _decay_rate(times, ez, floor=1e-8) -> Optional[float]:
    """Least-squares slope of -log|e_z| before it first drops below ``floor``."""
    below = np.flatnonzero(ez < floor)
    stop = below[0] if below.size else ez.size
    if stop < 3:
        return None
    t, y = times[:stop], np.log(ez[:stop])
    slope = np.polyfit(t - t[0], y, 1)[0]
    return float(-slope)


def run_reduced_demo(out_dir, step: Optional[float] = None,
                     horizon: Optional[float] = None,
                     epsilon: Optional[float] = None, zhat0=None,
                     scheme: Optional[str] = None, system_file=None,
                     gains_file=None):
    spec = load_system(system_file or bundled("reduced_system.toml"))
    gspec = load_gains(gains_file or bundled("reduced_gains.toml"))
    rg = gspec.reduced
    if rg is None:
        raise ConfigError("reduced-demo needs a [reduced] gains table")
    if epsilon is not None:
        rg = ReducedGains(rg.Q, rg.P21, rg.P22, epsilon)
    dec = decompose(spec.system, gspec.q)
    samples = _samples(spec)
    out = _out(out_dir)
    check = check_assumption4prime(dec, rg, spec.bounds, samples)
    report = {"schema": SCHEMA, "command": "reduced-demo",
              "system": spec.system.name, "epsilon": rg.epsilon,
              "check": check.to_dict()}
    if not check.passed:
        report["simulated"] = False
        write_json(out / "reduced_report.json", report)
        return 1, report
    simt = gspec.simulation
    cfg = SimConfig(horizon or float(simt.get("horizon", 30.0)),
                    step or float(simt.get("step", 1e-3)),
                    scheme=scheme or simt.get("scheme", "euler"))
    x0 = gspec.initial["x0"]
    zh0 = gspec.initial["zhat0"] if zhat0 is None else np.atleast_1d(
        np.asarray(zhat0, dtype=float))
    traj = simulate_reduced(dec, rg, spec.bounds, cfg, x0, zh0, samples)
    traj.to_csv(out / "reduced_trajectory.csv")
    ez = traj.extras["ez_norm"]
    qmax = float(np.linalg.eigvalsh(rg.Q)[-1])
    certified = rg.epsilon / (2.0 * qmax)
    est = _decay_rate(traj.times, ez)
    report.update({
        "simulated": True, "csv": "reduced_trajectory.csv",
        "step": cfg.h_step, "horizon": cfg.t_end,
        "x2_error_final": float(traj.e_norm[-1]),
        "ez_norm_initial": float(ez[0]),
        "ez_norm_final": float(ez[-1]),
        "rate_certified": certified,
        "rate_estimate": est,
        "rate_ok": est is None or est >= certified,
    })
    write_json(out / "reduced_report.json", report)
    return 0, report
