"""Sliding-mode observers for Lur'e systems with set-valued feedback."""

from .design import (Certificate, CertificateRefused, CheckReport,
                     ObserverGains, ReducedGains, check_assumption4,
                     check_assumption4prime, compute_h, exponential_certificate,
                     finite_time_certificate, lemma1_identity_check)
from .model import (DecomposedSystem, LipschitzBounds, LureSystem, decompose,
                    plant_rhs)
from .setvalued import (GuidedSignParams, SetValue, SetValuedMap, evaluate,
                        min_norm_selection, sign_delta, sign_exact,
                        sign_sigmoid)
from .simulate import (SignMode, SimConfig, Trajectory, chattering_index,
                       convergence_time, simulate_bounded_h, simulate_full,
                       simulate_reduced, simulate_scalar_sliding)

__version__ = "0.1.0"

__all__ = [
    "Certificate", "CertificateRefused", "CheckReport", "ObserverGains",
    "ReducedGains", "check_assumption4", "check_assumption4prime", "compute_h",
    "exponential_certificate", "finite_time_certificate",
    "lemma1_identity_check", "DecomposedSystem", "LipschitzBounds",
    "LureSystem", "decompose", "plant_rhs", "GuidedSignParams", "SetValue",
    "SetValuedMap", "evaluate", "min_norm_selection", "sign_delta",
    "sign_exact", "sign_sigmoid", "SignMode", "SimConfig", "Trajectory",
    "chattering_index", "convergence_time", "simulate_bounded_h",
    "simulate_full", "simulate_reduced", "simulate_scalar_sliding",
]
