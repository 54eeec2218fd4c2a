"""Iterative closest point with property-aware correspondence selection.

The property mechanism lives entirely in the association step (see
:mod:`propslam.association`); once correspondences are chosen, each
iteration solves the ordinary Euclidean least-squares rigid alignment in
closed form, so with ``penalty == 0`` and equal radii the algorithm *is*
conventional point-to-point ICP.

Transform convention: the returned transform maps source-frame coordinates
into target-frame coordinates, i.e. ``apply(result.transform, source)``
aligns with the target.  When the two clouds are consecutive scans, the
result is the pose of the source frame expressed in the target frame and
can be composed directly onto an accumulated trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .association import AssociationParams, SpatialIndex, associate_arrays
from .cloud import PointCloud
from .errors import (
    DegenerateGeometryError,
    EmptyCloudError,
    InsufficientOverlapError,
    UnobservableDirectionError,
)
from .geometry import RigidTransform, apply, compose, rotation_angle, skew

# Relative floor on the second singular value of the cross-covariance below
# which the rotation is not determined by the pairs.
_RANK_TOLERANCE = 1e-9
# Added to J^T J before inversion so near-degenerate geometry still yields a
# positive-definite covariance.
COVARIANCE_REGULARIZATION = 1e-9
# J^T J eigenvalues at or below this floor (relative to the largest) mean a
# twist direction is genuinely unobserved, regularization notwithstanding.
_OBSERVABILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class IcpParams:
    """Iteration controls around an association rule.

    The loop stops when one increment moves the source by less than
    ``translation_tolerance`` meters and ``rotation_tolerance`` radians, or
    after ``max_iterations``.  ``sensor_noise_sigma`` scales the output
    covariance (meters, per-axis range noise of the sensor model).
    """

    association: AssociationParams = AssociationParams()
    max_iterations: int = 50
    translation_tolerance: float = 1e-4
    rotation_tolerance: float = 1e-4
    min_correspondences: int = 10
    sensor_noise_sigma: float = 0.01

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.translation_tolerance <= 0.0 or self.rotation_tolerance <= 0.0:
            raise ValueError("stopping tolerances must be positive")
        if self.min_correspondences < 3:
            raise ValueError("min_correspondences must be at least 3")
        if self.sensor_noise_sigma <= 0.0:
            raise ValueError("sensor_noise_sigma must be positive")


@dataclass(frozen=True)
class IterationRecord:
    """Association slots (target index per source point, -1 for none) and the
    transform after the iteration's solve."""

    target_indices: np.ndarray
    transform: RigidTransform


@dataclass
class IcpResult:
    transform: RigidTransform
    converged: bool
    iterations: int
    final_cost: float
    euclidean_cost: float
    correspondence_count: int
    covariance: np.ndarray
    cost_history: list[float] = field(default_factory=list)
    history: list[IterationRecord] | None = None


def solve_rigid(
    source_points: np.ndarray, target_points: np.ndarray
) -> RigidTransform:
    """Closed-form minimizer of sum ||target_i - (R source_i + t)||^2.

    Standard SVD construction on the centered cross-covariance, with the
    determinant sign fix so the result is a proper rotation.  Raises
    :class:`DegenerateGeometryError` for fewer than 3 pairs or when the
    pair geometry leaves the rotation undetermined (rank < 2).
    """
    source_points = np.asarray(source_points, dtype=np.float64)
    target_points = np.asarray(target_points, dtype=np.float64)
    if len(source_points) != len(target_points):
        raise ValueError("source and target pair counts differ")
    if len(source_points) < 3:
        raise DegenerateGeometryError(
            f"degenerate correspondence set: {len(source_points)} pairs (need >= 3)"
        )
    centroid_source = source_points.mean(axis=0)
    centroid_target = target_points.mean(axis=0)
    h = (source_points - centroid_source).T @ (target_points - centroid_target)
    u, s, vt = np.linalg.svd(h)
    if s[1] <= _RANK_TOLERANCE * max(s[0], 1e-300):
        raise DegenerateGeometryError(
            "degenerate correspondence set: pair geometry is collinear, the "
            "rotation is undetermined"
        )
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    rotation = v @ np.diag([1.0, 1.0, d]) @ u.T
    translation = centroid_target - rotation @ centroid_source
    return RigidTransform(rotation, translation)


def residual_jacobian(point: np.ndarray) -> np.ndarray:
    """Derivative of ``twist_exp(xi) @ p`` w.r.t. the twist at xi = 0: a 3x6
    block ``[I | -skew(p)]``."""
    out = np.zeros((3, 6))
    out[:, :3] = np.eye(3)
    out[:, 3:] = -skew(np.asarray(point, dtype=np.float64))
    return out


def information_matrix(points: np.ndarray) -> np.ndarray:
    """``J^T J`` over per-pair residual Jacobians, in closed form.

    ``points`` are the matched source points after the final transform.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    total = points.sum(axis=0)
    out = np.zeros((6, 6))
    out[:3, :3] = n * np.eye(3)
    cross = -skew(total)
    out[:3, 3:] = cross
    out[3:, :3] = cross.T
    sq_norms = (points * points).sum()
    out[3:, 3:] = sq_norms * np.eye(3) - points.T @ points
    return out


def estimate_covariance(points: np.ndarray, sensor_noise_sigma: float) -> np.ndarray:
    """6x6 pose covariance ``sigma^2 (J^T J + reg I)^-1`` in twist coordinates.

    Inversion goes through the eigendecomposition so the result is symmetric
    positive definite by construction.  When the smallest eigenvalue of
    ``J^T J`` sits at numerical zero the geometry carries no information
    along that twist and :class:`UnobservableDirectionError` is raised
    instead of reporting a fictitious certainty.
    """
    info = information_matrix(points)
    eigenvalues, eigenvectors = np.linalg.eigh(info)
    floor = _OBSERVABILITY_FLOOR * max(float(eigenvalues[-1]), 1.0)
    if eigenvalues[0] <= floor:
        direction = eigenvectors[:, 0]
        raise UnobservableDirectionError(
            "correspondences carry no information along twist direction "
            f"{np.array2string(direction, precision=4)}",
            direction=direction,
        )
    inverted = eigenvectors @ np.diag(
        1.0 / (eigenvalues + COVARIANCE_REGULARIZATION)
    ) @ eigenvectors.T
    covariance = sensor_noise_sigma * sensor_noise_sigma * inverted
    return 0.5 * (covariance + covariance.T)


def run_icp(
    source: PointCloud,
    target: PointCloud,
    init: RigidTransform,
    params: IcpParams,
    keep_history: bool = False,
) -> IcpResult:
    """Align ``source`` onto ``target`` starting from ``init``.

    Each iteration associates the currently transformed source against the
    target, solves the rigid alignment over the matched pairs, and composes
    the increment onto the running transform.  The reported final cost is
    the penalized objective (squared distances plus class penalties) over a
    fresh association at the returned transform; ``euclidean_cost`` is the
    same sum without penalties.
    """
    if len(source) == 0:
        raise EmptyCloudError("empty source cloud")
    index = SpatialIndex(target)
    transform = init
    cost_history: list[float] = []
    history: list[IterationRecord] = []
    converged = False
    iterations = 0
    for iteration in range(1, params.max_iterations + 1):
        iterations = iteration
        moved = apply(transform, source.positions)
        target_idx, sq, penalty, found = associate_arrays(
            moved, source.labels, index, params.association
        )
        count = int(found.sum())
        if count < params.min_correspondences:
            raise InsufficientOverlapError(
                f"only {count} correspondences at iteration {iteration} "
                f"(need >= {params.min_correspondences})",
                iteration=iteration,
            )
        cost_history.append(float((sq[found] + penalty[found]).sum()))
        increment = solve_rigid(moved[found], target.positions[target_idx[found]])
        transform = compose(increment, transform)
        if keep_history:
            history.append(IterationRecord(target_idx, transform))
        if (
            float(np.linalg.norm(increment.translation))
            < params.translation_tolerance
            and rotation_angle(increment.rotation) < params.rotation_tolerance
        ):
            converged = True
            break
    moved = apply(transform, source.positions)
    target_idx, sq, penalty, found = associate_arrays(
        moved, source.labels, index, params.association
    )
    count = int(found.sum())
    if count < params.min_correspondences:
        raise InsufficientOverlapError(
            f"only {count} correspondences at the final transform "
            f"(need >= {params.min_correspondences})",
            iteration=iterations,
        )
    covariance = estimate_covariance(moved[found], params.sensor_noise_sigma)
    return IcpResult(
        transform=transform,
        converged=converged,
        iterations=iterations,
        final_cost=float((sq[found] + penalty[found]).sum()),
        euclidean_cost=float(sq[found].sum()),
        correspondence_count=count,
        covariance=covariance,
        cost_history=cost_history,
        history=history if keep_history else None,
    )
