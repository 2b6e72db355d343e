"""Verifiable l1 sparse recovery: contrast synthesis, certified recovery and risk bounds."""
__version__ = "0.1.0"

from .errors import (BoundVoidError, DimensionError, InfeasibleGammaError, L1CertError, NotCertifiableError,
                     ParameterError, SolverError, UnboundedSetError)
from .model import NoiseModel, NuNormParams, SensingMatrix, SignalSpec, UncertaintySet, nu_norm, observe
from .convexkit import Tolerances, solve_composite, solve_lp
from .synthesis import (ContrastCertificate, GoodnessProfile, gamma_star, incoherence_contrast, omega_star,
                        select_gamma_bar, symmetrize_contrast, verify_contrast)
from .recovery import (RecoveryResult, recover_dantzig, recover_lasso, recover_penalized, recover_regular)
from .nemp import NempConfig, nemp_run
from .bounds import BoundRequest, evaluate

__all__ = [
    "__version__", "L1CertError", "DimensionError", "UnboundedSetError", "SolverError", "InfeasibleGammaError",
    "NotCertifiableError", "BoundVoidError", "ParameterError", "SensingMatrix", "UncertaintySet", "NoiseModel",
    "SignalSpec", "NuNormParams", "nu_norm", "observe", "Tolerances", "solve_lp", "solve_composite",
    "ContrastCertificate", "GoodnessProfile", "gamma_star", "omega_star", "select_gamma_bar",
    "incoherence_contrast", "verify_contrast", "symmetrize_contrast", "RecoveryResult", "recover_regular",
    "recover_penalized", "recover_dantzig", "recover_lasso", "NempConfig", "nemp_run", "BoundRequest", "evaluate",
]
