"""TOML system and gain files.

Matrices are row-major nested lists of decimal numbers.  Nonlinearities are
referenced by registered name (see :mod:`lureobs.builtins`).  Every loader
raises :class:`ConfigError` for anything malformed.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import builtins
from .design import ObserverGains, ReducedGains
from .model import LipschitzBounds, LureSystem
from .setvalued import SetValuedMap

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "SystemSpec", "GainsSpec", "load_system",
           "load_gains", "load_toml", "bundled"]


class ConfigError(ValueError):
    pass


def bundled(name: str) -> Path:
    """Path of a config file shipped with the package."""
    return Path(str(resources.files("lureobs") / "data" / name))


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def matrix(value, name: str, shape: Optional[tuple] = None) -> np.ndarray:
    """Parse a matrix literal: a list of equally long lists of numbers."""
    if (not isinstance(value, list) or not value
            or not all(isinstance(r, list) and r for r in value)):
        raise ConfigError(f"{name}: expected a non-empty list of rows")
    width = len(value[0])
    for i, row in enumerate(value):
        if len(row) != width:
            raise ConfigError(f"{name}: row {i} has {len(row)} entries, "
                              f"expected {width}")
        for v in row:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name}: non-numeric entry {v!r}")
    out = np.array(value, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ConfigError(f"{name}: non-finite entry")
    if shape is not None and out.shape != shape:
        raise ConfigError(f"{name}: expected shape {shape}, got {out.shape}")
    return out


def vector(value, name: str) -> np.ndarray:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if (not isinstance(value, list) or not value
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in value)):
        raise ConfigError(f"{name}: expected a list of numbers")
    return np.array(value, dtype=float)


def number(table: dict, key: str, where: str, default=None) -> float:
    v = table.get(key, default)
    if v is None:
        raise ConfigError(f"{where}: missing {key!r}")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def _fn(table: dict, key: str, default: str):
    name = table.get(key, default)
    try:
        return builtins.lookup(name)
    except KeyError as exc:
        raise ConfigError(f"{key}: {exc.args[0]}") from None


def _operator(table: dict, m: int) -> SetValuedMap:
    kind = table.get("kind", "sign")
    dz = number(table, "dead_zone", "operator", 0.0)
    try:
        if kind == "sign":
            return SetValuedMap.sign(m, dead_zone=dz)
        if kind == "relay":
            return SetValuedMap.relay(number(table, "a", "operator"),
                                      number(table, "b", "operator"), m,
                                      dead_zone=dz)
    except ValueError as exc:
        raise ConfigError(f"operator: {exc}") from None
    raise ConfigError(f"operator.kind: unknown kind {kind!r}")


@dataclass
class SystemSpec:
    system: LureSystem
    bounds: LipschitzBounds
    state_box: tuple = (-10.0, 10.0)
    input_box: tuple = (-10.0, 10.0)
    n_samples: int = 1000
    seed: int = 0


def _box(table: dict, key: str, default) -> tuple:
    v = table.get(key, default)
    b = vector(list(v), f"samples.{key}")
    if b.size != 2 or not b[0] < b[1]:
        raise ConfigError(f"samples.{key}: expected [lo, hi] with lo < hi")
    return (float(b[0]), float(b[1]))


def load_system(path) -> SystemSpec:
    doc = load_toml(path)
    try:
        A = matrix(doc.get("A"), "A")
        B = matrix(doc.get("B"), "B")
        C = matrix(doc.get("C"), "C")
        F = matrix(doc.get("F"), "F")
        op = _operator(doc.get("operator", {}), B.shape[1])
        sys_ = LureSystem(
            A, B, C, F,
            f1=_fn(doc, "f1", "zero_vector"), f2=_fn(doc, "f2", "zero_column"),
            Fop=op, theta=_fn(doc, "theta", "zero_theta"),
            u=_fn(doc, "input", "zero_input"), name=doc.get("name", ""))
        bt = doc.get("bounds", {})
        L4 = bt.get("L4")
        bounds = LipschitzBounds(
            number(bt, "L1", "bounds"), number(bt, "L2", "bounds", 0.0),
            number(bt, "L3", "bounds", 0.0),
            None if L4 is None else number(bt, "L4", "bounds"))
        st = doc.get("samples", {})
        return SystemSpec(sys_, bounds,
                          state_box=_box(st, "state_box", (-10.0, 10.0)),
                          input_box=_box(st, "input_box", (-10.0, 10.0)),
                          n_samples=int(st.get("n", 1000)),
                          seed=int(st.get("seed", 0)))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass
class GainsSpec:
    observer: Optional[ObserverGains] = None
    gamma: Optional[float] = None
    reduced: Optional[ReducedGains] = None
    q: Optional[int] = None
    initial: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)


def load_gains(path) -> GainsSpec:
    doc = load_toml(path)
    out = GainsSpec()
    try:
        if "observer" in doc:
            t = doc["observer"]
            out.observer = ObserverGains(
                matrix(t.get("P"), "observer.P"), matrix(t.get("L"), "observer.L"),
                matrix(t.get("K"), "observer.K"),
                number(t, "beta", "observer"), number(t, "epsilon", "observer"))
            if "gamma" in t:
                out.gamma = number(t, "gamma", "observer")
        if "reduced" in doc:
            t = doc["reduced"]
            out.reduced = ReducedGains(
                matrix(t.get("Q"), "reduced.Q"), matrix(t.get("P21"), "reduced.P21"),
                matrix(t.get("P22"), "reduced.P22"),
                number(t, "epsilon", "reduced"))
            out.q = int(number(t, "q", "reduced"))
        for key, val in doc.get("initial", {}).items():
            out.initial[key] = vector(val, f"initial.{key}")
        out.simulation = dict(doc.get("simulation", {}))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if out.observer is None and out.reduced is None:
        raise ConfigError(f"{path}: needs an [observer] or [reduced] table")
    return out
