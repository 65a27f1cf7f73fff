"""
Monotone set-valued operators and continuous approximations of Sign.

The operators here are all of the form "single-valued away from the origin,
a ball (an interval in 1-D) at the origin": the Euclidean Sign, the relay
``a*x + b*Sign(x)`` and user-supplied maps with the same structure.  Every
integrator in the package uses :func:`min_norm_selection` to pick a single
element from the set value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SetValue",
    "SetValuedMap",
    "GuidedSignParams",
    "evaluate",
    "min_norm_selection",
    "sign_exact",
    "sign_sigmoid",
    "sign_delta",
    "monotonicity_gap",
]


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def _norm(v: np.ndarray) -> float:
    # np.linalg.norm costs ~5us per call on tiny vectors; this is the hot path
    return math.sqrt(float(v.dot(v)))


def _like(x, out: np.ndarray):
    # scalars in, scalars out
    if np.ndim(x) == 0:
        return float(out[0])
    return out


@dataclass(frozen=True)
class SetValue:
    """A closed ball ``{center + r*b : |b| <= 1}``; a singleton when r == 0.

    In one dimension the ball is the interval ``[center - r, center + r]``.
    """

    center: np.ndarray
    radius: float = 0.0

    @property
    def is_singleton(self) -> bool:
        return self.radius == 0.0

    @property
    def interval(self) -> tuple[float, float]:
        if self.center.size != 1:
            raise ValueError("interval view only exists in one dimension")
        c = float(self.center[0])
        return (c - self.radius, c + self.radius)

    def contains(self, v, tol: float = 1e-12) -> bool:
        return _norm(_vec(v) - self.center) <= self.radius + tol

    def min_norm_element(self) -> np.ndarray:
        """Projection of the origin onto the ball."""
        nc = _norm(self.center)
        if nc <= self.radius:
            return np.zeros_like(self.center)
        return self.center - self.radius * self.center / nc

    def __neg__(self) -> "SetValue":
        return SetValue(-self.center, self.radius)


@dataclass(frozen=True)
class SetValuedMap:
    """Descriptor of a monotone operator with a single branch point at 0.

    Use the constructors :meth:`sign`, :meth:`relay` and :meth:`custom`
    rather than instantiating directly.  ``dead_zone`` widens the branch
    point to the ball ``|x| <= dead_zone`` (default 0: exact comparison).
    """

    kind: str
    dimension: int
    a: float = 0.0
    b: float = 0.0
    branch: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, compare=False)
    zero_center: float = 0.0
    zero_radius: float = 0.0
    dead_zone: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sign", "relay", "custom"):
            raise ValueError(f"unknown map kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if self.a < 0 or self.b < 0:
            raise ValueError("relay slope and offset must be non-negative")
        if self.zero_radius < 0 or self.dead_zone < 0:
            raise ValueError("radii must be non-negative")
        if self.kind == "custom" and self.branch is None:
            raise ValueError("custom map needs a single-valued branch")

    @classmethod
    def sign(cls, m: int = 1, dead_zone: float = 0.0) -> "SetValuedMap":
        return cls("sign", m, a=0.0, b=1.0, dead_zone=dead_zone)

    @classmethod
    def relay(cls, a: float, b: float, m: int = 1,
              dead_zone: float = 0.0) -> "SetValuedMap":
        """``a*x + b*Sign(x)``; for m == 1 this is ``sign(x)*(a|x| + b)``."""
        return cls("relay", m, a=float(a), b=float(b), dead_zone=dead_zone)

    @classmethod
    def custom(cls, branch, dimension: int, zero_value=(0.0, 0.0),
               dead_zone: float = 0.0) -> "SetValuedMap":
        """Map equal to ``branch(x)`` for x != 0.

        ``zero_value`` is either a closed interval ``(lo, hi)`` (1-D only)
        or a scalar ball radius centred at the origin.  Monotonicity of the
        result is the caller's responsibility; see :func:`monotonicity_gap`.
        """
        if np.ndim(zero_value) == 0:
            center, radius = 0.0, float(zero_value)
        else:
            lo, hi = map(float, zero_value)
            if hi < lo:
                raise ValueError("empty zero-set interval")
            if dimension != 1:
                raise ValueError("interval zero value requires dimension 1")
            center, radius = 0.5 * (lo + hi), 0.5 * (hi - lo)
        return cls("custom", dimension, branch=branch, zero_center=center,
                   zero_radius=radius, dead_zone=dead_zone)

    def _check(self, x) -> np.ndarray:
        x = _vec(x)
        if x.shape != (self.dimension,):
            raise ValueError(
                f"expected a vector of dimension {self.dimension}, "
                f"got shape {x.shape}")
        return x

    def is_branch_point(self, x) -> bool:
        nx = _norm(_vec(x))
        return nx == 0.0 or nx <= self.dead_zone

    def evaluate(self, x) -> SetValue:
        x = self._check(x)
        m = self.dimension
        if self.is_branch_point(x):
            if self.kind == "custom":
                return SetValue(np.full(m, self.zero_center), self.zero_radius)
            # a*x is dropped inside the dead zone; exact at x == 0
            return SetValue(np.zeros(m), self.b)
        if self.kind == "custom":
            return SetValue(_vec(self.branch(x)).copy())
        return SetValue(self.a * x + self.b * x / _norm(x))

    __call__ = evaluate

    def select(self, x) -> np.ndarray:
        return self._select(self._check(x))

    def _select(self, x: np.ndarray) -> np.ndarray:
        # unchecked min-norm selection, for integrator inner loops
        nx = _norm(x)
        if nx == 0.0 or nx <= self.dead_zone:
            if self.kind != "custom":
                return np.zeros_like(x)
            return SetValue(np.full(self.dimension, self.zero_center),
                            self.zero_radius).min_norm_element()
        if self.kind == "custom":
            return _vec(self.branch(x))
        return (self.a + self.b / nx) * x

    def select_difference(self, s, d) -> np.ndarray:
        """``select(s + d) - select(s)`` without cancellation in the linear part.

        Matters when |s| is many orders of magnitude larger than |d|.
        """
        return self._select_difference(self._check(s), self._check(d))

    def _select_difference(self, s: np.ndarray, d: np.ndarray) -> np.ndarray:
        sd = s + d
        ns, nsd = _norm(s), _norm(sd)
        if (self.kind == "custom" or ns == 0.0 or ns <= self.dead_zone
                or nsd == 0.0 or nsd <= self.dead_zone):
            return self._select(sd) - self._select(s)
        return self.a * d + self.b * (sd / nsd - s / ns)


def evaluate(op: SetValuedMap, x) -> SetValue:
    """Full set value of ``op`` at ``x``."""
    return op.evaluate(x)


def min_norm_selection(op: SetValuedMap, x) -> np.ndarray:
    """Smallest-norm element of ``op(x)``; the selection used by all integrators."""
    return op.select(x)


def sign_exact(x):
    """``x/|x|`` for x != 0, and 0 (the min-norm point of the unit ball) at 0."""
    v = _vec(x)
    n = _norm(v)
    out = v / n if n > 0 else np.zeros_like(v)
    return _like(x, out)


def sign_sigmoid(x, eps: float, variant: str = "abs"):
    """Sigmoid surrogates ``x/(|x|+eps)`` ("abs") or ``x/sqrt(|x|^2+eps)`` ("sqrt")."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    v = _vec(x)
    n = _norm(v)
    if variant == "abs":
        out = v / (n + eps)
    elif variant == "sqrt":
        out = v / np.sqrt(n * n + eps)
    else:
        raise ValueError(f"unknown sigmoid variant {variant!r}")
    return _like(x, out)


@dataclass(frozen=True)
class GuidedSignParams:
    """Parameters of the time-guided Sign approximation.

    The guide is ``delta(t) = exp(-k1*t - k2)`` unless ``guide`` supplies
    another decreasing positive function of time.
    """

    k1: float
    k2: float = 0.0
    M: float = 1.0
    N: float = 3.0
    guide: Optional[Callable[[float], float]] = field(default=None,
                                                      compare=False)

    def __post_init__(self):
        if not self.k1 > 0:
            raise ValueError("k1 must be positive")
        if self.k2 < 0:
            raise ValueError("k2 must be non-negative")
        if not (self.M > 0 and self.N > 0):
            raise ValueError("M and N must be positive")

    def delta(self, t: float) -> float:
        if self.guide is not None:
            return float(self.guide(t))
        return float(np.exp(-self.k1 * t - self.k2))


def sign_delta(t: float, x, p: GuidedSignParams):
    """Continuous Sign surrogate that equals Sign outside the ball of radius delta(t)."""
    if t < 0:
        raise ValueError("time must be non-negative")
    v = _vec(x)
    n = _norm(v)
    if n == 0.0:
        return _like(x, np.zeros_like(v))
    d = p.delta(t)
    unit = v / n
    if n > d:
        return _like(x, unit)
    factor = 1.0 - (1.0 - n / d) / (1.0 + p.M * n) ** p.N
    return _like(x, factor * unit)


def monotonicity_gap(op: SetValuedMap, n_pairs: int = 1000, scale: float = 3.0,
                     rng=None) -> float:
    """Smallest sampled value of ``<x* - y*, x - y>`` over min-norm selections.

    A quarter of the pairs put one point exactly on the branch point, where
    the extreme points of the zero-set ball are also tried.  With a nonzero
    dead zone only the selection is tested: the widened branch set is a
    numerical device, not part of the operator.
    """
    rng = np.random.default_rng(rng)
    m = op.dimension
    worst = np.inf
    for k in range(n_pairs):
        x = rng.normal(scale=scale, size=m)
        y = rng.normal(scale=scale, size=m)
        if k % 4 == 0:
            y = np.zeros(m)
        xs = op.select(x)
        cands = [op.select(y)]
        if _norm(y) == 0.0 and op.dead_zone == 0.0:
            val = op.evaluate(y)
            d = x - y
            nd = _norm(d)
            if nd > 0 and val.radius > 0:
                cands += [val.center + val.radius * d / nd,
                          val.center - val.radius * d / nd]
        for ys in cands:
            worst = min(worst, float(np.dot(xs - ys, x - y)))
    return worst
