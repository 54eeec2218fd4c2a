"""Trajectory and map quality metrics.

Two measures: the per-frame translation error series (no alignment step;
estimate and truth share their first pose by construction) and the map
distance, the mean over estimated-map points of the distance to the
nearest truth-map point.  The map distance is one-directional on purpose:
every correctly placed estimated point has a nearby truth point, while
the reverse direction would punish truth regions the run never observed.

Caveat worth knowing: the map distance is blind to sliding a wall along
itself.  A long flat wall shifted parallel to its own direction still has
tiny nearest-neighbor distances.  Labels do not enter the distance; a
per-label breakdown is available separately as a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .association import SpatialIndex, _row_squared_distances
from .cloud import PointCloud
from .errors import EmptyCloudError, TrajectoryMismatchError
from .trajectory import Trajectory


def translation_error_series(
    estimate: Trajectory, truth: Trajectory
) -> np.ndarray:
    """Per-frame Euclidean distance between estimated and true positions."""
    if estimate.frame_ids != truth.frame_ids:
        raise TrajectoryMismatchError(
            "estimate and truth cover different frames: "
            f"{len(estimate)} vs {len(truth)} poses, "
            f"first difference at {_first_difference(estimate.frame_ids, truth.frame_ids)}"
        )
    deltas = estimate.translations() - truth.translations()
    return np.sqrt((deltas * deltas).sum(axis=1))


def _first_difference(a: tuple[int, ...], b: tuple[int, ...]) -> str:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return f"index {i} ({x} vs {y})"
    return f"length {min(len(a), len(b))}"


def nearest_distances(
    estimated_map: PointCloud, truth_map: PointCloud
) -> np.ndarray:
    """Distance from each estimated point to its nearest truth point.

    Distances are recomputed from coordinates after the index lookup, so
    the result is bit-identical to a brute-force scan.
    """
    if len(estimated_map) == 0:
        raise EmptyCloudError("empty estimated map")
    index = SpatialIndex(truth_map)
    _, indices = index.nearest(estimated_map.positions)
    sq = _row_squared_distances(
        estimated_map.positions, truth_map.positions[indices]
    )
    return np.sqrt(sq)


def map_distance(estimated_map: PointCloud, truth_map: PointCloud) -> float:
    """Mean nearest-neighbor distance, estimated map to truth map."""
    return float(np.mean(nearest_distances(estimated_map, truth_map)))


def map_distance_by_label(
    estimated_map: PointCloud, truth_map: PointCloud
) -> dict[int, float]:
    """Mean nearest-neighbor distance per estimated-point label."""
    distances = nearest_distances(estimated_map, truth_map)
    out: dict[int, float] = {}
    for label in sorted(np.unique(estimated_map.labels)):
        mask = estimated_map.labels == label
        out[int(label)] = float(np.mean(distances[mask]))
    return out


@dataclass
class EvalReport:
    """Everything the evaluation stage reports for one run."""

    variant: str
    frame_ids: tuple[int, ...]
    translation_errors: np.ndarray
    map_distance_m: float
    map_distance_by_label_m: dict[int, float]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.translation_errors < 0.0):
            raise ValueError("translation errors cannot be negative")
        if self.map_distance_m < 0.0:
            raise ValueError("map distance cannot be negative")

    @property
    def mean_translation_error(self) -> float:
        return float(np.mean(self.translation_errors))

    @property
    def final_translation_error(self) -> float:
        return float(self.translation_errors[-1])


def evaluate_run(
    variant: str,
    estimate: Trajectory,
    truth: Trajectory,
    estimated_map: PointCloud,
    truth_map: PointCloud,
    metadata: dict[str, str] | None = None,
) -> EvalReport:
    return EvalReport(
        variant=variant,
        frame_ids=estimate.frame_ids,
        translation_errors=translation_error_series(estimate, truth),
        map_distance_m=map_distance(estimated_map, truth_map),
        map_distance_by_label_m=map_distance_by_label(estimated_map, truth_map),
        metadata=dict(metadata or {}),
    )
