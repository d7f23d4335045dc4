"""Exception hierarchy shared by all modules.

Every error raised on purpose by the library derives from
:class:`OptomechError`.  The CLI maps the three families below onto its
exit codes: configuration problems, model problems (instability,
unphysical states, integration failures) and accuracy problems.
"""


class OptomechError(Exception):
    """Base class for library errors."""


class ConfigError(OptomechError):
    """Invalid user input: unknown keys, bad values, missing fields."""


class ArgumentError(OptomechError, ValueError):
    """A function argument is outside its allowed domain."""


class DimensionError(ArgumentError):
    """Matrix has the wrong shape (non-square or odd dimension)."""


class ModelError(OptomechError):
    """The physical model cannot be evaluated at these parameters."""


class StabilityError(ModelError):
    """Drift matrix has an eigenvalue with non-negative real part."""

    def __init__(self, message, eigenvalue=None, time=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue
        self.time = time


class PhysicalityError(ModelError):
    """Covariance matrix violates the uncertainty principle."""


class IntegrationError(ModelError):
    """Time integration failed (step-size collapse or blow-up)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ConvergenceError(ModelError):
    """An iterative solver or optimiser did not converge."""


class SymmetryError(ModelError):
    """Input lacks a symmetry the requested computation relies on."""


class AccuracyError(OptomechError):
    """A numerical quadrature or truncation misses its error target."""


class CutoffError(AccuracyError):
    """Fock-space truncation leaves too much probability in the tail."""
