"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to.
"""


class FlatSkinError(Exception):
    exit_code = 1


class ConfigurationError(FlatSkinError):
    """Bad user input: unbound parameter names, malformed options."""

    exit_code = 2


class ParseError(ConfigurationError):
    """A model-spec document failed validation.

    ``location`` names the offending key/entry, e.g. ``"Tplus[1][0]"``.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class NumericalError(FlatSkinError):
    """A numerical routine failed (non-convergence, overflow, singular solve)."""

    exit_code = 3

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class PreconditionError(FlatSkinError):
    exit_code = 4


class DomainError(PreconditionError):
    """Argument outside the mathematical domain of an operation (beta = 0, eta = 0, ...)."""


class DegeneracyAnomalyError(PreconditionError):
    """Null-space dimension differs from the expected flat-band count."""

    def __init__(self, message, found=None, expected=None):
        self.found = found
        self.expected = expected
        super().__init__(message)


class OnCurveError(PreconditionError):
    """Reference energy sits on a sampled spectral curve; winding is undefined."""


class SelfOrthogonalityError(NumericalError):
    """Left and right eigenvectors are (nearly) orthogonal, i.e. at or next to an EP."""
