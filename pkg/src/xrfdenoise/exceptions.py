"""Exception hierarchy shared across the package."""


class XrfError(Exception):
    """Base class for all package errors."""


class DimensionError(XrfError, ValueError):
    """Array shapes are inconsistent with each other."""


class InvariantError(XrfError, ValueError):
    """A value violates a type invariant (negative count, rgb outside [0, 1], ...)."""


class ContainerError(XrfError, ValueError):
    """A container file is malformed, truncated or fails its checksum."""


class ConvergenceError(XrfError, RuntimeError):
    """An iterative routine failed to certify its result."""


class DegenerateAtomError(XrfError, RuntimeError):
    """A dictionary atom collapsed to zero and could not be recovered."""


class SolverError(XrfError, FloatingPointError):
    """Optimization produced a non-finite loss or gradient."""
