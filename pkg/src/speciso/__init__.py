"""Laplace-Beltrami spectra of closed surfaces and isoperimetric eigenvalue bounds."""

__version__ = "0.1.0"

from .errors import (
    AuditError,
    ConvergenceError,
    InputError,
    MeshFormatError,
    MeshValidationError,
    ParameterError,
    PreconditionError,
    RadiusTooLargeError,
    SpecisoError,
)
from .mesh_core import TriangleMesh, load_mesh, make_dumbbell, make_ellipsoid, make_family, make_icosphere, save_mesh, validate

__all__ = [
    "AuditError", "ConvergenceError", "InputError", "MeshFormatError", "MeshValidationError",
    "ParameterError", "PreconditionError", "RadiusTooLargeError", "SpecisoError",
    "TriangleMesh", "load_mesh", "make_dumbbell", "make_ellipsoid", "make_family",
    "make_icosphere", "save_mesh", "validate",
]
