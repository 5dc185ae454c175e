"""Solver boundary: MPS interchange, external solver hooks and the bundled oracle."""

from .backend import (
    Backend,
    BackendError,
    CommandBackend,
    HighsBackend,
    LPRelaxation,
    ReferenceBackend,
    default_backend,
    get_backend,
    with_bounds,
)
from .bnb import MAX_REFERENCE_BINARIES, ScaleGuardError, SolveOptions, reference_solve
from .mps import MpsError, SolutionParseError, SolutionVector, emit_mps, parse_solution, write_solution

__all__ = [
    "Backend",
    "BackendError",
    "CommandBackend",
    "HighsBackend",
    "LPRelaxation",
    "MAX_REFERENCE_BINARIES",
    "MpsError",
    "ReferenceBackend",
    "ScaleGuardError",
    "SolutionParseError",
    "SolutionVector",
    "SolveOptions",
    "default_backend",
    "emit_mps",
    "get_backend",
    "parse_solution",
    "reference_solve",
    "with_bounds",
    "write_solution",
]
