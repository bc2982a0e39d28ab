"""Exception hierarchy shared by all modules.

CLI exit codes are attached to the classes so the front end can map
failures without a lookup table.
"""


class NrbcError(Exception):
    exit_code = 3


class UsageError(NrbcError, ValueError):
    """Invalid arguments or call order."""

    exit_code = 2


class CapabilityError(UsageError):
    """Request beyond a configured capability (e.g. ``l > L_max``)."""


class PrecisionError(NrbcError, ArithmeticError):
    """A value cannot be represented exactly in the requested arithmetic."""


class PoleError(NrbcError, ZeroDivisionError):
    """Evaluation point too close to a pole of the quantity being computed.

    Attributes
    ----------
    where : str
        Name of the vanishing denominator.
    point : complex
        The offending evaluation point (or root estimate).
    """

    def __init__(self, message, where="", point=None):
        super().__init__(message)
        self.where = where
        self.point = point


class NumericalError(NrbcError, RuntimeError):
    """Iteration failed to converge; ``diagnostics`` carries the details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConjugacyError(NumericalError):
    """A quantity that should be real carries a significant imaginary part."""


class TableParseError(NrbcError, ValueError):
    exit_code = 2

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TableLookupError(NrbcError, KeyError):
    exit_code = 2


class IdentityViolation(NrbcError):
    exit_code = 4
