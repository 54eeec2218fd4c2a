"""Property-aware correspondence search between two labeled clouds.

Matching a source point against a target cloud scores every candidate by

    cost = squared_distance + penalty_if_labels_differ

and admits candidates from two scopes:

* any target whose cost stays within ``base_radius**2``;
* for a labeled source point additionally any *same-class* target within
  ``widened_radius`` (the scope expansion that lets sparse property points
  find their partners beyond the ordinary gate).

The chosen target minimizes cost over the admitted set; exact cost ties go
to the lowest target index so results are reproducible.  A point with no
admitted candidate gets an empty slot.  With ``penalty == 0`` and equal
radii the rule collapses to plain nearest-neighbor matching, and with
``penalty > widened_radius**2`` no correspondence can pair two classes.

The kd-tree is only used to *discover* candidates; every admitted distance
is recomputed from the coordinates with the same arithmetic a brute-force
linear scan would use, so results match such an oracle slot for slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .errors import EmptyCloudError

# Relative inflation applied to kd-tree search bounds; discovery must not
# lose boundary candidates to the tree's strict-inequality bound, and every
# candidate is re-gated with the exact cost comparison afterwards.
_BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class AssociationParams:
    """Knobs of the correspondence search.

    ``penalty`` is the squared-meters cost added when labels differ; the
    default equals ``base_radius**2`` so a cross-class match can never beat
    an in-gate same-class match.  ``tie_break`` names the deterministic
    rule for exact cost ties; only ``"lowest_index"`` is defined.
    """

    base_radius: float = 1.0
    widened_radius: float = 3.0
    penalty: float = 1.0
    tie_break: str = "lowest_index"

    def __post_init__(self):
        if not (self.base_radius > 0.0 and self.widened_radius > 0.0):
            raise ValueError("association radii must be positive")
        if self.widened_radius < self.base_radius:
            raise ValueError("widened_radius must be >= base_radius")
        if self.penalty < 0.0:
            raise ValueError("penalty must be non-negative")
        if self.tie_break != "lowest_index":
            raise ValueError(f"unknown tie_break rule {self.tie_break!r}")


@dataclass(frozen=True)
class Correspondence:
    source_index: int
    target_index: int
    squared_distance: float
    penalty: float


def _row_squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a - b
    return (d * d).sum(axis=1)


class SpatialIndex:
    """Nearest-neighbor index over a target cloud, per label class.

    Query results are bit-identical to a brute-force linear scan with
    lowest-index tie resolution.
    """

    def __init__(self, cloud: PointCloud):
        if len(cloud) == 0:
            raise EmptyCloudError("empty reference cloud")
        self.cloud = cloud
        self._tree_all = cKDTree(cloud.positions)
        self._class_data: dict[int, tuple[np.ndarray, np.ndarray, cKDTree]] = {}
        for label in np.unique(cloud.labels):
            indices = np.nonzero(cloud.labels == label)[0]
            positions = cloud.positions[indices]
            self._class_data[int(label)] = (indices, positions, cKDTree(positions))

    @property
    def class_labels(self) -> tuple[int, ...]:
        return tuple(sorted(self._class_data))

    def nearest(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unbounded nearest target per query point: (sq_distances, indices)."""
        _, idx = self._tree_all.query(points, k=1)
        idx = np.atleast_1d(idx).astype(np.int64)
        sq = _row_squared_distances(np.atleast_2d(points), self.cloud.positions[idx])
        return sq, idx

    def nearest_within(
        self, points: np.ndarray, radius: float
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nearest target within ``radius`` per query point.

        Returns ``(sq_distances, indices, found)``; slots with no target in
        range have ``found`` False.  Exact distance ties resolve to the
        lowest target index.
        """
        all_indices = np.arange(len(self.cloud), dtype=np.int64)
        sq, idx, found = _nearest_in_tree(
            self._tree_all, self.cloud.positions, all_indices, points, radius
        )
        keep = found & (sq <= radius * radius)
        return sq, idx, keep

    def nearest_in_class(
        self, label: int, points: np.ndarray, radius: float
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Like :meth:`nearest_within` but restricted to one target class.

        No exact admission gate is applied here beyond candidate discovery;
        callers gate on their own cost formula.
        """
        data = self._class_data.get(int(label))
        if data is None:
            n = len(np.atleast_2d(points))
            return np.full(n, np.inf), np.full(n, -1, dtype=np.int64), np.zeros(n, bool)
        indices, positions, tree = data
        return _nearest_in_tree(tree, positions, indices, points, radius)


def _nearest_in_tree(
    tree: cKDTree,
    positions: np.ndarray,
    original_indices: np.ndarray,
    points: np.ndarray,
    radius: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    points = np.atleast_2d(points)
    n = len(points)
    if n == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, bool)
    bound = radius * (1.0 + _BOUND_SLACK) + 1e-12
    dist, local = tree.query(points, k=2, distance_upper_bound=bound)
    dist = np.atleast_2d(dist)
    local = np.atleast_2d(local)
    first = local[:, 0].copy()
    found = first < tree.n
    # An exact distance tie between the two nearest neighbors means the tree
    # may have returned an arbitrary one; resolve those rows to the lowest
    # index among all minimum-distance candidates.
    ties = np.nonzero(found & np.isfinite(dist[:, 1]) & (dist[:, 1] == dist[:, 0]))[0]
    for row in ties:
        candidates = np.asarray(
            tree.query_ball_point(points[row], r=float(dist[row, 0])), dtype=np.int64
        )
        sqs = _row_squared_distances(positions[candidates], points[row][None, :])
        best = sqs.min()
        first[row] = candidates[sqs == best].min()
    indices = np.full(n, -1, dtype=np.int64)
    sq = np.full(n, np.inf)
    if found.any():
        hit_local = first[found]
        indices[found] = original_indices[hit_local]
        sq[found] = _row_squared_distances(positions[hit_local], points[found])
    return sq, indices, found


def associate_arrays(
    positions: np.ndarray,
    labels: np.ndarray,
    index: SpatialIndex,
    params: AssociationParams,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Array-valued core of :func:`associate`.

    Returns ``(target_indices, squared_distances, penalties, found)`` with
    one slot per source point; missing slots have index -1.
    """
    n = len(positions)
    best_cost = np.full(n, np.inf)
    best_index = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    best_sq = np.full(n, np.inf)
    best_penalty = np.zeros(n)
    base_limit = params.base_radius * params.base_radius
    widened_limit = params.widened_radius * params.widened_radius

    def fold(rows, sq, idx, penalty, limit):
        cost = sq + penalty
        admit = cost <= limit
        rows, cost, sq, idx = rows[admit], cost[admit], sq[admit], idx[admit]
        better = (cost < best_cost[rows]) | (
            (cost == best_cost[rows]) & (idx < best_index[rows])
        )
        rows = rows[better]
        best_cost[rows] = cost[better]
        best_index[rows] = idx[better]
        best_sq[rows] = sq[better]
        best_penalty[rows] = penalty

    for cls in index.class_labels:
        same = np.nonzero(labels == cls)[0]
        if same.size:
            radius = params.widened_radius if cls != 0 else params.base_radius
            limit = widened_limit if cls != 0 else base_limit
            sq, idx, found = index.nearest_in_class(cls, positions[same], radius)
            fold(same[found], sq[found], idx[found], 0.0, limit)
        other = np.nonzero(labels != cls)[0]
        if other.size and params.penalty <= base_limit:
            radius = float(np.sqrt(max(base_limit - params.penalty, 0.0)))
            sq, idx, found = index.nearest_in_class(cls, positions[other], radius)
            fold(other[found], sq[found], idx[found], params.penalty, base_limit)

    found = np.isfinite(best_cost)
    target = np.where(found, best_index, -1)
    return target, best_sq, np.where(found, best_penalty, 0.0), found


def associate(
    source: PointCloud, index: SpatialIndex, params: AssociationParams
) -> list[Correspondence | None]:
    """One correspondence slot per source point, in source order."""
    target, sq, penalty, found = associate_arrays(
        source.positions, source.labels, index, params
    )
    return [
        Correspondence(i, int(target[i]), float(sq[i]), float(penalty[i]))
        if found[i]
        else None
        for i in range(len(source))
    ]
