"""Exception types raised across the package.

Each class marks one failure mode of the contracts in the public API, so
callers (and tests) can catch precisely what they expect instead of
pattern-matching on messages.
"""


class CatsimError(Exception):
    """Base class for all package errors."""


class TruncationError(CatsimError):
    """A Fock truncation is too small for the requested construction."""


class CutoffError(CatsimError):
    """A Dicke excitation cutoff is invalid (n_cut < 1 or n_cut > N)."""


class MemoryGuardError(CatsimError):
    """A product-space request would exceed the hard size guard."""


class EmbeddingError(CatsimError):
    """Operator and space dimensions do not line up in an embedding."""


class RepresentationError(CatsimError):
    """The requested operation is undefined in the chosen representation."""


class ParameterError(CatsimError):
    """Physical parameters are outside the domain of a formula."""


class AssemblyError(CatsimError):
    """A model or restricted model failed a structural consistency check."""


class StiffnessError(CatsimError):
    """The adaptive integrator stalled (step size collapsed)."""


class ConvergenceError(CatsimError):
    """An iteration hit its budget before reaching tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class QuadratureError(CatsimError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class StateValidityError(CatsimError):
    """A state failed hermiticity, trace or positivity validation."""


class CoefficientConsistencyError(CatsimError):
    """Closed-form manifold coefficients assemble to a non-physical state."""


class DegenerateSpectrumError(CatsimError):
    """A spectral computation found no usable nonzero eigenvalue."""


class DimensionGuardError(CatsimError):
    """A dense superoperator was requested above the size guard."""


class ConfigError(CatsimError):
    """An experiment configuration failed validation."""
