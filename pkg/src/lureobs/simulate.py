"""
Fixed-step integration of plant/observer inclusions.

Discontinuous right-hand sides are integrated with the min-norm selection of
every set-valued term, evaluated at the current (stage) point.  Explicit
Euler is the reference scheme: it reproduces the discrete-time chattering
that the continuous Sign surrogates are meant to remove.  RK4 is offered for
smooth runs; with an exact Sign it loses its order at the switching surface.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .design import (ObserverGains, ReducedGains,
                     box_samples, check_assumption4prime, compute_h)
from .model import (DecomposedSystem, LipschitzBounds, LureSystem,
                    _plant_rhs)
from .setvalued import (GuidedSignParams, sign_delta,
                        sign_exact, sign_sigmoid)

__all__ = [
    "SignMode",
    "SimConfig",
    "Trajectory",
    "SimulationDiverged",
    "PreconditionError",
    "integrate",
    "observer_correction",
    "simulate_full",
    "simulate_bounded_h",
    "simulate_reduced",
    "simulate_scalar_sliding",
    "chattering_index",
    "convergence_time",
]

BLOWUP = 1e9


class SimulationDiverged(RuntimeError):
    """Raised when a state leaves the finite range; carries the valid prefix."""

    def __init__(self, index: int, times: np.ndarray, states: np.ndarray):
        super().__init__(f"state blew up after grid index {index} "
                         f"(t = {times[index]:.6g})")
        self.index = index
        self.times = times
        self.states = states


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class SignMode:
    """How ``Sign(e)`` is realized: exact, sigmoid surrogate, or time-guided."""

    kind: str = "exact"
    eps: float = 1e-3
    variant: str = "abs"
    guided: Optional[GuidedSignParams] = None

    def __post_init__(self):
        if self.kind not in ("exact", "sigmoid", "guided"):
            raise ValueError(f"unknown sign mode {self.kind!r}")
        if self.kind == "sigmoid" and not self.eps > 0:
            raise ValueError("sigmoid eps must be positive")
        if self.kind == "guided" and self.guided is None:
            raise ValueError("guided mode needs GuidedSignParams")

    @classmethod
    def parse(cls, text: str) -> "SignMode":
        """Parse ``exact``, ``sigmoid:EPS[:VARIANT]`` or ``guided:K1:K2:M:N``."""
        parts = text.strip().split(":")
        kind = parts[0]
        try:
            if kind == "exact" and len(parts) == 1:
                return cls("exact")
            if kind == "sigmoid" and len(parts) in (2, 3):
                variant = parts[2] if len(parts) == 3 else "abs"
                return cls("sigmoid", eps=float(parts[1]), variant=variant)
            if kind == "guided" and len(parts) == 5:
                k1, k2, M, N = map(float, parts[1:])
                return cls("guided", guided=GuidedSignParams(k1, k2, M, N))
        except ValueError as exc:
            raise ValueError(f"bad sign mode {text!r}: {exc}") from None
        raise ValueError(f"bad sign mode {text!r}")

    def label(self) -> str:
        if self.kind == "sigmoid":
            return f"sigmoid:{self.eps:g}:{self.variant}"
        if self.kind == "guided":
            g = self.guided
            return f"guided:{g.k1:g}:{g.k2:g}:{g.M:g}:{g.N:g}"
        return "exact"

    def __call__(self, t: float, v: np.ndarray, tol_zero: float = 0.0):
        if self.kind == "exact":
            if tol_zero > 0 and math.sqrt(float(np.dot(v, v))) <= tol_zero:
                return np.zeros_like(v)
            return sign_exact(v)
        if self.kind == "sigmoid":
            return sign_sigmoid(v, self.eps, self.variant)
        return sign_delta(t, v, self.guided)


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    h_step: float = 1e-3
    t0: float = 0.0
    scheme: str = "euler"
    sign_mode: SignMode = SignMode()
    selection: str = "min_norm"
    tol_zero: float = 0.0
    coordinates: str = "state"

    def __post_init__(self):
        if not self.h_step > 0:
            raise ValueError("step size must be positive")
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")
        if self.scheme not in ("euler", "rk4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.selection != "min_norm":
            raise ValueError("only the min_norm selection is supported")
        if self.tol_zero < 0:
            raise ValueError("tol_zero must be non-negative")
        if self.coordinates not in ("state", "error"):
            raise ValueError(f"unknown coordinates {self.coordinates!r}")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.h_step))

    def grid(self) -> np.ndarray:
        return self.t0 + self.h_step * np.arange(self.n_steps + 1)


def _bounded(y: np.ndarray) -> bool:
    n2 = float(y.dot(y))
    return math.isfinite(n2) and n2 <= BLOWUP * BLOWUP


def integrate(fun: Callable, y0, cfg: SimConfig,
              guard: Callable[[np.ndarray], bool] = _bounded):
    """Fixed-step integration of ``y' = fun(t, y)`` on ``cfg.grid()``.

    Returns ``(times, states)``.  Raises :class:`SimulationDiverged` when
    ``guard`` rejects a state; the default guard rejects non-finite states
    and norms above 1e9.
    """
    times = cfg.grid()
    h = cfg.h_step
    y = np.array(y0, dtype=float)
    Y = np.empty((times.size, y.size))
    Y[0] = y
    rk4 = cfg.scheme == "rk4"
    for k in range(times.size - 1):
        t = times[k]
        if rk4:
            k1 = fun(t, y)
            k2 = fun(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = fun(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = fun(t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            y = y + h * fun(t, y)
        if not guard(y):
            raise SimulationDiverged(k, times[: k + 1], Y[: k + 1].copy())
        Y[k + 1] = y
    return times, Y


@dataclass
class Trajectory:
    """Sampled run.  Series not produced by a run are left as ``None``."""

    times: np.ndarray
    x: np.ndarray
    x_hat: Optional[np.ndarray] = None
    e_norm: Optional[np.ndarray] = None
    ey_norm: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    omega_hat: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.times.size

    @property
    def error(self) -> np.ndarray:
        return self.e if self.e is not None else self.x_hat - self.x

    def series(self, name: str) -> np.ndarray:
        """Scalar series by name: ``x_1``, ``xhat_2``, ``e_3``, ``omega``,
        ``e_norm``, ..., or any key of ``extras``."""
        if name in self.extras:
            s = np.asarray(self.extras[name])
            return s if s.ndim == 1 else np.linalg.norm(s, axis=1)
        key, _, idx = name.rpartition("_")
        if key in self.extras and idx.isdigit():
            return np.asarray(self.extras[key])[:, int(idx) - 1]
        for prefix, arr in (("xhat_", self.x_hat), ("x_", self.x),
                            ("e_", None if self.x_hat is None else self.error),
                            ("omega_hat_", self.omega_hat),
                            ("omega_", self.omega)):
            if name.startswith(prefix) and name[len(prefix):].isdigit():
                if arr is None:
                    raise KeyError(name)
                return arr[:, int(name[len(prefix):]) - 1]
        arr = getattr(self, name, None)
        if not isinstance(arr, np.ndarray):
            raise KeyError(name)
        return arr if arr.ndim == 1 else (
            arr[:, 0] if arr.shape[1] == 1 else np.linalg.norm(arr, axis=1))

    def columns(self) -> list[tuple[str, np.ndarray]]:
        cols = [("t", self.times)]
        cols += [(f"x_{i + 1}", self.x[:, i]) for i in range(self.x.shape[1])]
        if self.x_hat is not None:
            cols += [(f"xhat_{i + 1}", self.x_hat[:, i])
                     for i in range(self.x_hat.shape[1])]
        for key in ("e_norm", "ey_norm", "V", "W"):
            arr = getattr(self, key)
            if arr is not None:
                cols.append((key, arr))
        for key in ("omega", "omega_hat"):
            arr = getattr(self, key)
            if arr is None:
                continue
            if arr.shape[1] == 1:
                cols.append((key, arr[:, 0]))
            else:
                cols += [(f"{key}_{i + 1}", arr[:, i])
                         for i in range(arr.shape[1])]
        for key, arr in self.extras.items():
            arr = np.asarray(arr)
            if arr.ndim == 1:
                cols.append((key, arr))
            else:
                cols += [(f"{key}_{i + 1}", arr[:, i])
                         for i in range(arr.shape[1])]
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([name for name, _ in cols])
            data = np.column_stack([c for _, c in cols])
            for row in data:
                w.writerow([format(v, ".17g") for v in row])


class _Observer:
    """The parts of a plant an observer may use: everything except theta."""

    def __init__(self, sys: LureSystem, gains: ObserverGains, sign_mode,
                 tol_zero: float, h_scale: Optional[Callable] = None):
        self.A, self.B, self.C, self.F = sys.A, sys.B, sys.C, sys.F
        self.f1 = sys.f1
        self.Fop = sys.Fop
        self.L, self.K = gains.L, gains.K
        self.inj = gains.beta * np.linalg.solve(gains.P, sys.F.T)
        self.sign_mode = sign_mode
        self.tol_zero = tol_zero
        self.h_scale = h_scale

    def omega(self, xh, ey):
        return -self.Fop._select(self.C @ xh - self.K @ ey)

    def correction(self, t, xh, ey, u):
        c = self.inj @ np.atleast_1d(self.sign_mode(t, ey, self.tol_zero))
        if self.h_scale is not None:
            c = c * self.h_scale(xh, u)
        return -c

    def rhs(self, t, xh, y, u):
        ey = self.F @ xh - y
        return (self.A @ xh + self.B @ self.omega(xh, ey) - self.L @ ey
                + np.asarray(self.f1(xh, u)) + self.correction(t, xh, ey, u))

    def rhs_minus_known(self, t, x, e, u):
        """``rhs(x + e) - (A x + B w + f1(x))`` assembled term by term.

        This is the error dynamics minus the plant's unknown-signal term.
        The relay difference is taken without forming ``C(x + e)``, so it
        stays accurate while the plant state grows without bound.
        """
        ey = self.F @ e
        s = self.C @ x
        d = self.C @ e - self.K @ ey
        xh = x + e
        return (self.A @ e - self.L @ ey
                - self.B @ self.Fop._select_difference(s, d)
                + np.asarray(self.f1(xh, u)) - np.asarray(self.f1(x, u))
                + self.correction(t, xh, ey, u))


def observer_correction(sys: LureSystem, gains: ObserverGains, sign_mode: SignMode,
                        t: float, x_hat, y, u=None, hf=None,
                        tol_zero: float = 0.0) -> np.ndarray:
    """The sliding injection term of the observer at one state.

    Without ``hf`` this is the bounded-h injection ``-beta P^-1 F^T s(e_y)``;
    with an :class:`~lureobs.design.HFunction` it is scaled by ``|h(x_hat, u)|``.
    """
    scale = None
    if hf is not None:
        scale = lambda xh, uu: float(np.linalg.norm(hf(xh, uu), 2))
    obs = _Observer(sys, gains, sign_mode, tol_zero, scale)
    x_hat = np.asarray(x_hat, dtype=float)
    u = sys.input(t) if u is None else np.atleast_1d(u)
    return obs.correction(t, x_hat, obs.F @ x_hat - np.asarray(y, float), u)


def _run_observer(sys: LureSystem, gains: ObserverGains, cfg: SimConfig,
                  x0, xhat0, h_scale) -> Trajectory:
    n = sys.dims.n
    x0 = np.asarray(x0, dtype=float)
    xhat0 = np.asarray(xhat0, dtype=float)
    if x0.shape != (n,) or xhat0.shape != (n,):
        raise ValueError(f"initial states must be {n}-vectors")
    obs = _Observer(sys, gains, cfg.sign_mode, cfg.tol_zero, h_scale)
    F = sys.F

    if cfg.coordinates == "state":
        def joint(t, s):
            x, xh = s[:n], s[n:]
            u = sys.input(t)
            return np.concatenate([_plant_rhs(sys, t, x, u),
                                   obs.rhs(t, xh, F @ x, u)])

        times, S = integrate(joint, np.concatenate([x0, xhat0]), cfg)
        X, XH = S[:, :n], S[:, n:]
        E = XH - X
    else:
        # (x, e) coordinates: the plant may grow, only the error is guarded
        def joint(t, s):
            x, e = s[:n], s[n:]
            u = sys.input(t)
            unknown = np.asarray(sys.f2(x, u)) @ np.atleast_1d(
                sys.theta(t, x, u))
            return np.concatenate([_plant_rhs(sys, t, x, u),
                                   obs.rhs_minus_known(t, x, e, u) - unknown])

        def guard(s):
            return math.isfinite(float(s.dot(s))) and _bounded(s[n:])

        times, S = integrate(joint, np.concatenate([x0, xhat0 - x0]), cfg,
                             guard)
        X, E = S[:, :n], S[:, n:]
        XH = X + E
    EY = E @ F.T
    G = np.linalg.inv(F @ np.linalg.solve(gains.P, F.T))
    omega = np.array([-sys.Fop.select(sys.C @ x) for x in X])
    omega_hat = omega + np.array([
        -sys.Fop._select_difference(sys.C @ x, sys.C @ e - gains.K @ ey)
        for x, e, ey in zip(X, E, EY)])
    corr = np.array([obs.correction(t, xh, ey, sys.input(t))
                     for t, xh, ey in zip(times, XH, EY)])
    return Trajectory(
        times=times, x=X, x_hat=XH,
        e_norm=np.linalg.norm(E, axis=1),
        ey_norm=np.linalg.norm(EY, axis=1),
        V=np.einsum("ij,jk,ik->i", E, gains.P, E),
        W=0.5 * np.einsum("ij,jk,ik->i", EY, G, EY),
        omega=omega, omega_hat=omega_hat, e=E,
        extras={"correction": corr},
        info={"scheme": cfg.scheme, "h_step": cfg.h_step,
              "sign_mode": cfg.sign_mode.label(),
              "coordinates": cfg.coordinates})


def simulate_full(sys: LureSystem, gains: ObserverGains, bounds: LipschitzBounds,
                  cfg: SimConfig, x0, xhat0, samples=None) -> Trajectory:
    """Plant plus the observer whose injection is scaled by ``|h(x_hat, u)|``."""
    if gains.beta < bounds.L3:
        raise PreconditionError(
            f"beta = {gains.beta:g} must be at least L3 = {bounds.L3:g}")
    hf = compute_h(sys, gains.P, sys.F, samples)
    return _run_observer(
        sys, gains, cfg, x0, xhat0,
        lambda xh, u: float(np.linalg.norm(hf(xh, u), 2)))


def simulate_bounded_h(sys: LureSystem, gains: ObserverGains,
                       bounds: LipschitzBounds, cfg: SimConfig, x0, xhat0,
                       cross_tol: float = 1e-3, certificate=None,
                       strict: bool = True) -> Trajectory:
    """Plant plus the observer with the unscaled injection ``-beta P^-1 F^T s(e_y)``.

    Requires ``beta > L3*L4``; with ``strict=False`` a violation only warns.
    ``info`` records the first time ``|e_y| <= cross_tol`` and, if a
    certificate is given, whether it is within ``certificate.tf_bound``.
    """
    if bounds.L4 is None:
        raise PreconditionError("bounded-h observer needs L4")
    margin = gains.beta - bounds.L3 * bounds.L4
    if not margin > 0:
        msg = (f"beta = {gains.beta:g} does not exceed L3*L4 = "
               f"{bounds.L3 * bounds.L4:g}")
        if strict:
            raise PreconditionError(msg)
        warnings.warn(msg + "; simulating anyway", RuntimeWarning, stacklevel=2)
    traj = _run_observer(sys, gains, cfg, x0, xhat0, None)
    hit = np.flatnonzero(traj.ey_norm <= cross_tol)
    first = float(traj.times[hit[0]]) if hit.size else None
    traj.info["cross_tol"] = cross_tol
    traj.info["first_crossing_time"] = first
    if certificate is not None and certificate.tf_bound is not None:
        traj.info["tf_bound"] = certificate.tf_bound
        traj.info["within_tf_bound"] = (first is not None
                                        and first <= certificate.tf_bound)
    return traj


def simulate_reduced(dec: DecomposedSystem, rg: ReducedGains,
                     bounds: LipschitzBounds, cfg: SimConfig, x0, zhat0,
                     samples=None) -> Trajectory:
    """Full-order plant driving the reduced-order observer of the unmeasured block.

    The observer sees only ``x1 = Fq^-1 y`` and the input.  ``e_norm`` is
    ``|x2_hat - x2|``; ``V`` is ``e_z^T Q e_z``; ``extras`` holds ``z``,
    ``z_hat`` and ``ez_norm``.
    """
    sys = dec.system
    n, q = sys.dims.n, dec.q
    if samples is None:
        samples = box_samples(n, sys.dims.r)
    report = check_assumption4prime(dec, rg, bounds, samples)
    if not report.passed:
        failed = ", ".join(v.name for v in report.verdicts if not v.passed)
        raise PreconditionError(f"reduced-order conditions fail: {failed}")
    K = rg.K
    Ar = dec.A22 + K @ dec.A12
    Br = dec.B2 + K @ dec.B1
    Mx = (dec.A21 + K @ dec.A11) - Ar @ K
    KI = np.hstack([K, np.eye(n - q)])
    C1r = dec.C1 - dec.C2 @ K
    C2 = dec.C2
    Fq_inv = np.linalg.inv(dec.Fq)
    F, f1, Fop = sys.F, sys.f1, sys.Fop

    def omega_hat(zh, x1):
        return -Fop.select(C2 @ zh + C1r @ x1)

    def observer(t, zh, y, u):
        x1 = Fq_inv @ y
        xf = np.concatenate([x1, zh - K @ x1])
        return (Ar @ zh + Br @ omega_hat(zh, x1) + Mx @ x1
                + KI @ np.asarray(f1(xf, u)))

    x0 = np.asarray(x0, dtype=float)
    zhat0 = np.asarray(zhat0, dtype=float)
    if x0.shape != (n,) or zhat0.shape != (n - q,):
        raise ValueError("initial state shapes do not match the decomposition")

    def joint(t, s):
        x, zh = s[:n], s[n:]
        u = sys.input(t)
        return np.concatenate([_plant_rhs(sys, t, x, u),
                               observer(t, zh, F @ x, u)])

    times, S = integrate(joint, np.concatenate([x0, zhat0]), cfg)
    X, ZH = S[:, :n], S[:, n:]
    X1 = X[:, :q]
    Z = X[:, q:] + X1 @ K.T
    X2H = ZH - X1 @ K.T
    EZ = ZH - Z
    XH = np.hstack([X1, X2H])
    omega = np.array([-Fop.select(sys.C @ x) for x in X])
    om_hat = np.array([omega_hat(zh, x1) for zh, x1 in zip(ZH, X1)])
    return Trajectory(
        times=times, x=X, x_hat=XH,
        e_norm=np.linalg.norm(X2H - X[:, q:], axis=1),
        ey_norm=np.zeros(times.size),
        V=np.einsum("ij,jk,ik->i", EZ, rg.Q, EZ),
        W=np.zeros(times.size),
        omega=omega, omega_hat=om_hat,
        extras={"z": Z, "z_hat": ZH, "ez_norm": np.linalg.norm(EZ, axis=1)},
        info={"scheme": cfg.scheme, "h_step": cfg.h_step,
              "check": report.to_dict()})


def simulate_scalar_sliding(mu: Callable, gain: float, x0, cfg: SimConfig
                            ) -> Trajectory:
    """Integrate ``x' in mu(x) - gain * Sign(x)`` with ``cfg.sign_mode`` for Sign.

    ``extras['switch']`` holds the realized Sign term along the run.
    """
    mode, tol = cfg.sign_mode, cfg.tol_zero

    def rhs(t, x):
        return np.asarray(mu(x), dtype=float) - gain * np.atleast_1d(
            mode(t, x, tol))

    times, X = integrate(rhs, np.atleast_1d(np.asarray(x0, dtype=float)), cfg)
    switch = np.array([np.atleast_1d(mode(t, x, tol)) for t, x in zip(times, X)])
    return Trajectory(times=times, x=X,
                      extras={"switch": switch[:, 0] if switch.shape[1] == 1
                              else switch},
                      info={"scheme": cfg.scheme, "h_step": cfg.h_step,
                            "sign_mode": mode.label()})


Selector = Union[str, Callable[[Trajectory], np.ndarray]]


def _select(traj: Trajectory, selector: Selector) -> np.ndarray:
    return np.asarray(selector(traj) if callable(selector)
                      else traj.series(selector), dtype=float)


def chattering_index(traj: Trajectory, signal: Selector = "x_1",
                     window: float = 0.5) -> dict:
    """Sign changes per unit time and mean amplitude over the trailing window.

    ``window`` is the fraction of the horizon kept at the end of the run.
    Exact zeros are skipped when counting sign changes.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    if not 0 < window <= 1:
        raise ValueError("window fraction must lie in (0, 1]")
    t = traj.times
    s = _select(traj, signal)
    start = t[-1] - window * (t[-1] - t[0])
    mask = t >= start - 1e-12 * max(1.0, abs(start))
    if mask.sum() < 2:
        raise ValueError("window contains fewer than two samples")
    tw, sw = t[mask], s[mask]
    sg = np.sign(sw)
    sg = sg[sg != 0]
    switches = int(np.count_nonzero(sg[1:] != sg[:-1]))
    duration = tw[-1] - tw[0]
    return {"switch_count": switches,
            "switch_count_per_unit_time": switches / duration,
            "mean_amplitude": float(np.mean(np.abs(sw))),
            "max_amplitude": float(np.max(np.abs(sw))),
            "window_start": float(tw[0])}


def convergence_time(traj: Trajectory, series: Selector, tol: float
                     ) -> Optional[float]:
    """First grid time after which ``|series|`` stays ``<= tol`` to the end."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    s = np.abs(_select(traj, series))
    above = np.flatnonzero(s > tol)
    if above.size == 0:
        return float(traj.times[0])
    k = above[-1] + 1
    if k >= s.size:
        return None
    return float(traj.times[k])
