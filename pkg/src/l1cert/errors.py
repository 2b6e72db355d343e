"""Exception hierarchy shared by all modules.

Every error raised on purpose by the package derives from ``L1CertError``;
the command-line front end maps these to exit code 1.
"""


class L1CertError(Exception):
    """Base class for domain errors."""


class DimensionError(L1CertError, ValueError):
    """Inputs with inconsistent shapes."""


class UnboundedSetError(L1CertError, ValueError):
    """An uncertainty set that fails the boundedness check."""


class SolverError(L1CertError, RuntimeError):
    """A convex solve that did not reach an optimal, validated solution.

    ``index`` identifies the failing subproblem (column) when applicable.
    """

    def __init__(self, message, status=None, index=None):
        super().__init__(message)
        self.status = status
        self.index = index


class InfeasibleGammaError(L1CertError, ValueError):
    """Requested gamma lies below the smallest feasible level gamma_star."""


class NotCertifiableError(L1CertError, ValueError):
    """The sparsity level cannot be certified (s * gamma_star >= 1/2)."""


class BoundVoidError(L1CertError, ValueError):
    """A risk bound was requested outside the parameter range where it holds."""


class ParameterError(L1CertError, ValueError):
    """A tuning parameter outside its admissible range."""
