"""Exception hierarchy shared by all speciso modules.

The CLI maps ``InputError`` subclasses to exit code 2 and
``ConvergenceError`` to exit code 3.
"""


class SpecisoError(Exception):
    pass


class InputError(SpecisoError, ValueError):
    """Bad parameters, malformed files or violated preconditions."""


class ParameterError(InputError):
    pass


class MeshFormatError(InputError):
    """Malformed or unsupported mesh file.

    ``lineno`` is 1-based, or None when the problem is not tied to a line.
    """

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class MeshValidationError(InputError):
    def __init__(self, violations):
        super().__init__("invalid mesh: " + "; ".join(violations))
        self.violations = list(violations)


class OrientationError(InputError):
    pass


class TopologyError(InputError):
    pass


class DegenerateGeometryError(InputError):
    pass


class PreconditionError(InputError):
    pass


class InconsistentInputError(InputError):
    pass


class RadiusTooLargeError(InputError):
    pass


class ConvergenceError(SpecisoError, RuntimeError):
    """Eigensolver did not converge; carries whatever it managed to compute."""

    def __init__(self, message, eigenvalues=None, residuals=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.residuals = residuals


class AuditError(SpecisoError, RuntimeError):
    """A construction failed its own postcondition audit."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []
