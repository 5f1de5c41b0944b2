"""Error taxonomy shared by the library and the command line driver.

Parameter / validation / domain problems are user-fixable (exit code 1);
numerical / stability problems mean the computation itself broke (exit code 2).
"""


class ParameterError(ValueError):
    """A parameter is outside its admissible range."""


class ValidationError(ValueError):
    """Structured input (table, config, file) failed validation."""


class DomainError(ValueError):
    """A query point lies outside the represented domain."""


class NumericalError(RuntimeError):
    """A computation lost validity (non-finite values, failed convergence)."""


class StabilityError(NumericalError):
    """A stability guard tripped; the run needs smaller steps or log mode."""
