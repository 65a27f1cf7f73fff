"""Lur'e plants with a set-valued feedback nonlinearity.

The plant is

    x' = A x + B w + f1(x, u) + f2(x, u) theta(t, x, u),   w in -Fop(C x),
    y  = F x.

``theta`` is the unknown signal; it lives on the plant object so the
simulator can produce ground truth, but observers never read it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .setvalued import SetValuedMap

__all__ = [
    "Dims",
    "LureSystem",
    "LipschitzBounds",
    "DecomposedSystem",
    "plant_rhs",
    "decompose",
    "lipschitz_spot_check",
]


class Dims(NamedTuple):
    n: int
    m: int
    p: int
    r: int
    l: int


def _mat(a, name: str) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1) if name == "B" else a.reshape(1, -1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    a.setflags(write=False)
    return a


def _zero_input(t):
    return np.zeros(1)


def _zero_theta(t, x, u):
    return np.zeros(1)


@dataclass(frozen=True)
class LureSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray
    f1: Callable
    f2: Callable
    Fop: SetValuedMap
    theta: Callable = _zero_theta
    u: Callable = _zero_input
    name: str = ""
    dims: Dims = field(init=False)

    def __post_init__(self):
        for key in ("A", "B", "C", "F"):
            object.__setattr__(self, key, _mat(getattr(self, key), key))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        m = self.B.shape[1]
        if self.B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {self.B.shape}")
        if self.C.shape != (m, n):
            raise ValueError(f"C must be {m}x{n}, got {self.C.shape}")
        if self.F.shape[1] != n:
            raise ValueError(f"F must have {n} columns, got {self.F.shape}")
        if self.Fop.dimension != m:
            raise ValueError(
                f"operator dimension {self.Fop.dimension} != m = {m}")
        p = self.F.shape[0]
        u0 = np.atleast_1d(np.asarray(self.u(0.0), dtype=float))
        x0 = np.zeros(n)
        if np.shape(self.f1(x0, u0)) != (n,):
            raise ValueError(f"f1 must return an {n}-vector")
        f2 = np.asarray(self.f2(x0, u0), dtype=float)
        if f2.ndim != 2 or f2.shape[0] != n:
            raise ValueError(f"f2 must return an {n}xl matrix, got {f2.shape}")
        l = f2.shape[1]
        th = np.atleast_1d(self.theta(0.0, x0, u0))
        if th.shape != (l,):
            raise ValueError(f"theta must return an {l}-vector")
        object.__setattr__(self, "dims", Dims(n, m, p, u0.size, l))

    def input(self, t: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.u(t), dtype=float))


@dataclass(frozen=True)
class LipschitzBounds:
    """L1, L2: Lipschitz constants of f1, f2; L3: bound on |theta|; L4: bound on |h|."""

    L1: float
    L2: float
    L3: float
    L4: Optional[float] = None

    def __post_init__(self):
        for key in ("L1", "L2", "L3"):
            if getattr(self, key) < 0:
                raise ValueError(f"{key} must be non-negative")
        if self.L4 is not None and self.L4 < 0:
            raise ValueError("L4 must be non-negative")

    @property
    def gamma(self) -> float:
        return self.L1 + self.L2 * self.L3


def plant_rhs(sys: LureSystem, t: float, x, u) -> np.ndarray:
    """Right-hand side of the plant with the min-norm selection of ``-Fop(Cx)``."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n = sys.dims.n
    if x.shape != (n,):
        raise ValueError(f"state must be an {n}-vector, got shape {x.shape}")
    if u.shape != (sys.dims.r,):
        raise ValueError(f"input must be an {sys.dims.r}-vector")
    return _plant_rhs(sys, t, x, u)


def _plant_rhs(sys: LureSystem, t, x, u) -> np.ndarray:
    omega = -sys.Fop._select(sys.C @ x)
    th = np.atleast_1d(sys.theta(t, x, u))
    return (sys.A @ x + sys.B @ omega + np.asarray(sys.f1(x, u))
            + np.asarray(sys.f2(x, u)) @ th)


def lipschitz_spot_check(sys: LureSystem, bounds: LipschitzBounds, samples,
                         n_pairs: int = 10_000, radius: float = 1.0,
                         rng=None) -> dict:
    """Sample difference quotients of f1, f2 and |theta| and compare with ``bounds``.

    Violations only warn: the declared constants are trusted inputs.
    ``samples`` is a pair ``(X, U)`` of state and input draws; each pair
    perturbs a drawn state by a random offset of norm at most ``radius``.
    """
    rng = np.random.default_rng(rng)
    X, U = samples
    idx = rng.integers(0, len(X), size=n_pairs)
    q1 = q2 = th = 0.0
    for i in idx:
        x, u = X[i], U[i]
        d = rng.normal(size=x.shape)
        d *= radius * rng.uniform() / max(np.linalg.norm(d), 1e-300)
        nd = np.linalg.norm(d)
        if nd == 0:
            continue
        y = x + d
        q1 = max(q1, np.linalg.norm(sys.f1(x, u) - sys.f1(y, u)) / nd)
        q2 = max(q2, np.linalg.norm(np.asarray(sys.f2(x, u))
                                    - np.asarray(sys.f2(y, u)), 2) / nd)
        t = rng.uniform(0, 100)
        th = max(th, np.linalg.norm(sys.theta(t, x, u)))
    out = {
        "L1_declared": bounds.L1, "L1_observed": float(q1),
        "L2_declared": bounds.L2, "L2_observed": float(q2),
        "L3_declared": bounds.L3, "L3_observed": float(th),
    }
    bad = [k for k in ("L1", "L2", "L3")
           if out[f"{k}_observed"] > out[f"{k}_declared"] * (1 + 1e-9) + 1e-12]
    out["ok"] = not bad
    if bad:
        warnings.warn(
            "declared constants below sampled values: "
            + ", ".join(f"{k} {out[k + '_declared']:g} < {out[k + '_observed']:.6g}"
                        for k in bad), RuntimeWarning, stacklevel=2)
    return out


@dataclass(frozen=True)
class DecomposedSystem:
    """Block view of a plant whose output matrix is ``F = (Fq 0)``."""

    system: LureSystem
    q: int
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    Fq: np.ndarray

    def f11(self, x, u):
        return np.asarray(self.system.f1(x, u))[: self.q]

    def f12(self, x, u):
        return np.asarray(self.system.f1(x, u))[self.q:]

    def f21(self, x, u):
        return np.asarray(self.system.f2(x, u))[: self.q]

    def f22(self, x, u):
        return np.asarray(self.system.f2(x, u))[self.q:]

    def reassemble(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        A = np.block([[self.A11, self.A12], [self.A21, self.A22]])
        B = np.vstack([self.B1, self.B2])
        C = np.hstack([self.C1, self.C2])
        p = self.Fq.shape[0]
        F = np.hstack([self.Fq, np.zeros((p, self.A.shape[0] - self.q))])
        return A, B, C, F

    @property
    def A(self):
        return self.system.A


def decompose(sys: LureSystem, q: int) -> DecomposedSystem:
    n = sys.dims.n
    if not 1 <= q < n:
        raise ValueError(f"block size q must satisfy 1 <= q < {n}")
    F = sys.F
    if F.shape[0] != q:
        raise ValueError(f"F must have q = {q} rows for the (Fq 0) form")
    if np.any(F[:, q:] != 0):
        raise ValueError("F is not of the form (Fq 0)")
    Fq = F[:, :q]
    s = np.linalg.svd(Fq, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise ValueError("Fq is singular")
    A, B, C = sys.A, sys.B, sys.C
    return DecomposedSystem(
        system=sys, q=q,
        A11=A[:q, :q], A12=A[:q, q:], A21=A[q:, :q], A22=A[q:, q:],
        B1=B[:q], B2=B[q:], C1=C[:, :q], C2=C[:, q:], Fq=Fq)
