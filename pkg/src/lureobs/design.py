"""
Checks of the observer-design conditions for given candidate gains, and the
convergence certificates that follow from them.

Nothing here synthesizes gains.  Every check returns a :class:`CheckReport`
of named verdicts with residuals and thresholds; failures are verdicts, not
exceptions.  The certificate builders refuse (raise
:class:`CertificateRefused`) when their hypotheses do not hold.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import DecomposedSystem, LipschitzBounds, LureSystem

__all__ = [
    "ObserverGains",
    "ReducedGains",
    "Verdict",
    "CheckReport",
    "HFunction",
    "Certificate",
    "CertificateRefused",
    "box_samples",
    "compute_h",
    "check_assumption4",
    "check_assumption4prime",
    "lemma1_residual",
    "lemma1_identity_check",
    "range_residual",
    "exponential_certificate",
    "finite_time_certificate",
]

TOL_PSD = 1e-9
TOL_EQ = 1e-9
TOL_FUNC = 1e-8
TOL_RANGE = 1e-8


class CertificateRefused(ValueError):
    pass


def _symmetric_pd(P: np.ndarray, name: str) -> np.ndarray:
    P = np.array(P, dtype=float, ndmin=2)
    if P.shape[0] != P.shape[1]:
        raise ValueError(f"{name} must be square")
    scale = max(np.linalg.norm(P, 2), 1e-300)
    if np.max(np.abs(P - P.T)) > 1e-12 * scale:
        raise ValueError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(0.5 * (P + P.T))[0] <= 0:
        raise ValueError(f"{name} is not positive definite")
    P.setflags(write=False)
    return P


@dataclass(frozen=True)
class ObserverGains:
    P: np.ndarray
    L: np.ndarray
    K: np.ndarray
    beta: float
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "P", _symmetric_pd(self.P, "P"))
        object.__setattr__(self, "L", np.array(self.L, dtype=float, ndmin=2))
        object.__setattr__(self, "K", np.array(self.K, dtype=float, ndmin=2))
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def alpha_max(self) -> float:
        return float(np.linalg.eigvalsh(self.P)[-1])

    @property
    def alpha_min(self) -> float:
        return float(np.linalg.eigvalsh(self.P)[0])


@dataclass(frozen=True)
class ReducedGains:
    Q: np.ndarray
    P21: np.ndarray
    P22: np.ndarray
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "Q", _symmetric_pd(self.Q, "Q"))
        P21 = np.array(self.P21, dtype=float, ndmin=2)
        P22 = np.array(self.P22, dtype=float, ndmin=2)
        if P22.shape != self.Q.shape or P21.shape[0] != P22.shape[0]:
            raise ValueError("P21/P22 shapes do not match Q")
        if not np.isfinite(np.linalg.cond(P22)):
            raise ValueError("P22 is singular")
        object.__setattr__(self, "P21", P21)
        object.__setattr__(self, "P22", P22)
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.linalg.solve(self.P22, self.P21)


@dataclass
class Verdict:
    name: str
    residual: float
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "residual": self.residual,
                "threshold": self.threshold, "pass": self.passed}


@dataclass
class CheckReport:
    verdicts: list[Verdict]
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def __getitem__(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"pass": self.passed,
                "verdicts": [v.to_dict() for v in self.verdicts],
                **self.details}


def box_samples(n_state: int, n_input: int, state_box=(-10.0, 10.0),
                input_box=(-10.0, 10.0), n: int = 1000, seed: int = 0):
    """Uniform draws ``(X, U)`` from a state box and an input box."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(state_box[0], state_box[1], size=(n, n_state))
    U = rng.uniform(input_box[0], input_box[1], size=(n, n_input))
    return X, U


def _full_row_rank(F: np.ndarray) -> None:
    s = np.linalg.svd(F, compute_uv=False)
    if s.size < F.shape[0] or s[-1] <= 1e-10 * s[0]:
        raise ValueError("F is not full row rank")


def _output_gram_inv(P, F) -> np.ndarray:
    """``(F P^-1 F^T)^-1``."""
    return np.linalg.inv(F @ np.linalg.solve(P, F.T))


@dataclass
class HFunction:
    """``h(x, u) = ((F P^-1 F^T)^-1 F f2(x, u))^T`` plus sampled diagnostics."""

    h: Callable
    bound: float
    residuals: np.ndarray

    def __call__(self, x, u):
        return self.h(x, u)

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0


def compute_h(sys: LureSystem, P, F=None, samples=None) -> HFunction:
    P = np.asarray(P, dtype=float)
    F = sys.F if F is None else np.asarray(F, dtype=float)
    _full_row_rank(F)
    G = _output_gram_inv(P, F)
    GF = G @ F
    f2 = sys.f2

    def h(x, u):
        return (GF @ np.asarray(f2(x, u))).T

    bound = 0.0
    res = []
    if samples is not None:
        for x, u in zip(*samples):
            fx = np.asarray(f2(x, u))
            hx = (GF @ fx).T
            bound = max(bound, float(np.linalg.norm(hx, 2)))
            res.append(float(np.linalg.norm(fx.T @ P - hx @ F)))
    return HFunction(h, bound, np.array(res))


def check_assumption4(sys: LureSystem, gains: ObserverGains,
                      bounds: LipschitzBounds, gamma: Optional[float] = None,
                      samples=None, tol_psd: float = TOL_PSD) -> CheckReport:
    """Verify the matrix inequality, the output-coupling equality and the
    structural condition on f2 for fixed candidate gains.

    ``gamma`` defaults to ``bounds.gamma``; pass ``bounds.L1`` for the
    bounded-h regime.
    """
    A, B, C, F = sys.A, sys.B, sys.C, sys.F
    P, L, K, eps = gains.P, gains.L, gains.K, gains.epsilon
    g = bounds.gamma if gamma is None else float(gamma)
    n = A.shape[0]
    Acl = A - L @ F
    M = P @ Acl + Acl.T @ P + g * P @ P + (g + eps) * np.eye(n)
    M = 0.5 * (M + M.T)
    lam = float(np.linalg.eigvalsh(M)[-1])
    v_ineq = Verdict("lmi_inequality", lam, tol_psd, lam <= tol_psd)

    lhs = B.T @ P
    rhs = C - K @ F
    r_eq = float(np.max(np.abs(lhs - rhs)))
    scale_eq = max(1.0, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    v_eq = Verdict("coupling_equality", r_eq, TOL_EQ * scale_eq,
                   r_eq <= TOL_EQ * scale_eq)

    hf = compute_h(sys, P, F, samples)
    r_f = hf.max_residual
    scale_f = 1.0
    if samples is not None:
        for x, u in zip(*samples):
            scale_f = max(scale_f, float(np.linalg.norm(
                np.asarray(sys.f2(x, u)).T @ P)))
    v_f = Verdict("f2_structure", r_f, TOL_FUNC * scale_f,
                  r_f <= TOL_FUNC * scale_f)
    return CheckReport(
        [v_ineq, v_eq, v_f],
        {"gamma": g, "max_eigenvalue": lam,
         "eigenvalues": np.linalg.eigvalsh(M).tolist(),
         "h_bound_sampled": hf.bound})


def check_assumption4prime(dec: DecomposedSystem, rg: ReducedGains,
                           bounds: LipschitzBounds, samples=None,
                           tol_psd: float = TOL_PSD) -> CheckReport:
    K, Q, eps, L1 = rg.K, rg.Q, rg.epsilon, bounds.L1
    k = Q.shape[0]
    if dec.A22.shape != (k, k):
        raise ValueError("reduced gains do not match the decomposition")
    I = np.eye(k)
    Ar = dec.A22 + K @ dec.A12
    M = Q @ Ar + Ar.T @ Q + L1 * Q @ (K @ K.T + I) @ Q + (L1 + eps) * I
    M = 0.5 * (M + M.T)
    lam = float(np.linalg.eigvalsh(M)[-1])
    v_ineq = Verdict("reduced_inequality", lam, tol_psd, lam <= tol_psd)

    lhs = (dec.B2 + K @ dec.B1).T @ Q
    r_eq = float(np.max(np.abs(lhs - dec.C2)))
    scale_eq = max(1.0, float(np.max(np.abs(lhs))),
                   float(np.max(np.abs(dec.C2))))
    v_eq = Verdict("reduced_coupling_equality", r_eq, TOL_EQ * scale_eq,
                   r_eq <= TOL_EQ * scale_eq)

    P2 = np.hstack([rg.P21, rg.P22])
    r_f, scale_f = 0.0, 1.0
    if samples is not None:
        for x, u in zip(*samples):
            fx = np.asarray(dec.system.f2(x, u))
            r_f = max(r_f, float(np.linalg.norm(P2 @ fx)))
            scale_f = max(scale_f, float(np.linalg.norm(fx)))
    v_f = Verdict("reduced_f2_annihilation", r_f, TOL_FUNC * scale_f,
                  r_f <= TOL_FUNC * scale_f)
    return CheckReport([v_ineq, v_eq, v_f],
                       {"max_eigenvalue": lam, "K": K.tolist()})


def lemma1_residual(P, F, x) -> float:
    """Relative residual of ``F^T (F P^-1 F^T)^-1 F x = P x``."""
    P = np.asarray(P, dtype=float)
    F = np.asarray(F, dtype=float)
    x = np.asarray(x, dtype=float)
    _full_row_rank(F)
    lhs = F.T @ _output_gram_inv(P, F) @ F @ x
    Px = P @ x
    return float(np.linalg.norm(lhs - Px) / max(np.linalg.norm(Px), 1e-300))


def lemma1_identity_check(P, F, trials: int = 100, rng=None) -> float:
    """Worst relative residual over ``x = P^-1 F^T z`` for random z."""
    rng = np.random.default_rng(rng)
    P = _symmetric_pd(P, "P")
    F = np.asarray(F, dtype=float)
    _full_row_rank(F)
    PinvFt = np.linalg.solve(P, F.T)
    worst = 0.0
    for _ in range(trials):
        z = rng.normal(size=F.shape[0])
        worst = max(worst, lemma1_residual(P, F, PinvFt @ z))
    return worst


def range_residual(P, F, B) -> float:
    """How far the columns of B are from im(P^-1 F^T), via the identity residual."""
    B = np.array(B, dtype=float, ndmin=2)
    worst = 0.0
    for col in B.T:
        if np.linalg.norm(col) > 0:
            worst = max(worst, lemma1_residual(P, F, col))
    return worst


@dataclass
class Certificate:
    gamma_used: float
    alpha_max: float
    alpha_min: float
    rate: float
    V0: float
    envelope_scale: float
    sigma: Optional[float] = None
    kappa: Optional[float] = None
    gamma_max_W: Optional[float] = None
    t1: Optional[float] = None
    W_t1_bound: Optional[float] = None
    W_t1_measured: Optional[float] = None
    tf_bound_envelope: Optional[float] = None
    tf_bound_measured: Optional[float] = None
    tf_bound: Optional[float] = None
    range_residual: Optional[float] = None
    verdicts: list = field(default_factory=list)

    def envelope(self, t):
        """Upper bound on |e(t)| (t measured from the initial time)."""
        return self.envelope_scale * np.exp(-self.rate * np.asarray(t))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdicts"] = [v.to_dict() if isinstance(v, Verdict) else v
                         for v in self.verdicts]
        return d


def _require(report: Optional[CheckReport]) -> None:
    if report is not None and not report.passed:
        failed = [v.name for v in report.verdicts if not v.passed]
        raise CertificateRefused(
            "design conditions not satisfied: " + ", ".join(failed))


def exponential_certificate(gains: ObserverGains, bounds: LipschitzBounds,
                            V0: float, report: Optional[CheckReport] = None
                            ) -> Certificate:
    """Exponential error envelope ``sqrt(V0/alpha_min) * exp(-eps t / (2 alpha_max))``.

    If ``report`` (from :func:`check_assumption4`) is given and failed, the
    certificate is refused.
    """
    _require(report)
    if V0 < 0:
        raise ValueError("V0 must be non-negative")
    amax, amin = gains.alpha_max, gains.alpha_min
    gamma_used = (report.details.get("gamma", bounds.gamma)
                  if report is not None else bounds.gamma)
    return Certificate(
        gamma_used=gamma_used, alpha_max=amax, alpha_min=amin,
        rate=gains.epsilon / (2.0 * amax), V0=float(V0),
        envelope_scale=float(np.sqrt(V0 / amin)),
        verdicts=list(report.verdicts) if report is not None else [])


def finite_time_certificate(sys: LureSystem, gains: ObserverGains,
                            bounds: LipschitzBounds, V0: float,
                            W_at_t1: Optional[float] = None,
                            report: Optional[CheckReport] = None,
                            enforce_range: bool = True) -> Certificate:
    """Reach-time bound for the output error under the bounded-h observer.

    Raises :class:`CertificateRefused` when ``beta <= L3*L4`` or, with
    ``enforce_range``, when im(B) is not inside im(P^-1 F^T).  With
    ``enforce_range=False`` the range verdict is recorded as failed and the
    bound is still computed.
    """
    if bounds.L4 is None:
        raise CertificateRefused("finite-time certificate needs a bound L4 on h")
    sigma = gains.beta - bounds.L3 * bounds.L4
    if not sigma > 0:
        raise CertificateRefused(
            f"beta = {gains.beta:g} must exceed L3*L4 = "
            f"{bounds.L3 * bounds.L4:g} (sigma = {sigma:g})")
    P, F, L = gains.P, sys.F, gains.L
    _full_row_rank(F)
    rr = range_residual(P, F, sys.B)
    v_range = Verdict("range_condition", rr, TOL_RANGE, rr <= TOL_RANGE)
    if enforce_range and not v_range.passed:
        raise CertificateRefused(
            f"im(B) not contained in im(P^-1 F^T): residual {rr:.3g}")
    cert = exponential_certificate(gains, bounds, V0, report)
    G = _output_gram_inv(P, F)
    gmax = float(np.linalg.eigvalsh(0.5 * (G + G.T))[-1])
    arg = (2.0 * np.linalg.norm(G @ F, 2)
           * (np.linalg.norm(sys.A - L @ F, 2) + bounds.L1) / sigma
           * cert.envelope_scale)
    t1 = (2.0 * cert.alpha_max / gains.epsilon) * np.log(arg) if arg > 1 else 0.0
    kappa = sigma / np.sqrt(2.0 * gmax)
    W_env = 0.5 * gmax * np.linalg.norm(F, 2) ** 2 * float(cert.envelope(t1)) ** 2
    cert.sigma = float(sigma)
    cert.kappa = float(kappa)
    cert.gamma_max_W = gmax
    cert.t1 = float(t1)
    cert.W_t1_bound = float(W_env)
    cert.tf_bound_envelope = float(t1 + 2.0 * np.sqrt(W_env) / kappa)
    if W_at_t1 is not None:
        if W_at_t1 < 0:
            raise ValueError("W(t1) must be non-negative")
        cert.W_t1_measured = float(W_at_t1)
        cert.tf_bound_measured = float(t1 + 2.0 * np.sqrt(W_at_t1) / kappa)
    cert.tf_bound = (cert.tf_bound_measured if W_at_t1 is not None
                     else cert.tf_bound_envelope)
    cert.range_residual = rr
    cert.verdicts.append(v_range)
    return cert
