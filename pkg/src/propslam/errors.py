"""Exception types shared across the package."""

from __future__ import annotations


class PropSlamError(Exception):
    """Base class for every error raised by this package."""


class SingularRotationError(PropSlamError):
    """Rotation angle sits at the parameterization singularity (pi)."""


class EmptyCloudError(PropSlamError):
    """An operation that needs points received an empty cloud."""


class DegenerateGeometryError(PropSlamError):
    """Correspondence geometry does not determine a rigid transform."""


class InsufficientOverlapError(PropSlamError):
    """Too few correspondences survived association to keep iterating.

    ``iteration`` records the 1-based ICP iteration that failed.
    """

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class UnobservableDirectionError(PropSlamError):
    """The correspondence set carries no information along some twist.

    ``direction`` holds the offending unit twist (vx, vy, vz, wx, wy, wz).
    """

    def __init__(self, message: str, direction):
        super().__init__(message)
        self.direction = direction


class DanglingEdgeError(PropSlamError):
    """A pose-graph edge references a node id that does not exist."""


class OptimizationDivergedError(PropSlamError):
    """Damped Gauss-Newton hit the damping ceiling without an acceptable step.

    ``report`` carries the last optimization report for diagnosis.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class DegenerateRayOriginError(PropSlamError):
    """The simulated sensor origin lies on an environment surface."""


class TrajectoryMismatchError(PropSlamError):
    """Two trajectories that must share frame ids do not."""


class ParseError(PropSlamError):
    """A text input could not be parsed.

    Carries the offending ``path``, 1-based ``line`` number, and 1-based
    ``column`` (whitespace-separated field index) when known.
    """

    def __init__(
        self,
        message: str,
        path: str | None = None,
        line: int | None = None,
        column: int | None = None,
    ):
        if column is not None:
            message = f"{message} (field {column})"
        location = ""
        if path is not None:
            location = f"{path}:" if line is None else f"{path}:{line}:"
        super().__init__(f"{location} {message}".strip() if location else message)
        self.path = path
        self.line = line
        self.column = column


class ConfigError(PropSlamError):
    """A run configuration is invalid or conflicts with the requested mode."""
