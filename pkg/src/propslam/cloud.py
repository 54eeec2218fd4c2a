"""Point clouds with per-point physical property labels.

A label is a small integer class id.  Label 0 means "no property observed"
and is itself a class, so every point has exactly one class and label
comparisons are total.  Ids 1..255 name observed properties; the two the
simulator emits are :data:`LABEL_HEAT` and :data:`LABEL_WATER`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EmptyCloudError

LABEL_UNLABELED = 0
LABEL_HEAT = 1
LABEL_WATER = 2

MAX_LABEL = 255


class LabeledPoint(NamedTuple):
    position: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable stack of labeled points in one coordinate frame.

    ``positions`` is (N, 3) float64, ``labels`` is (N,) uint8, and the two
    always have matching length.  ``frame_id`` tags which scan the points
    came from (non-negative; 0 for assembled maps and other derived clouds).
    """

    positions: np.ndarray
    labels: np.ndarray
    frame_id: int = 0

    def __post_init__(self):
        positions = np.array(self.positions, dtype=np.float64).reshape(-1, 3)
        labels_raw = np.array(self.labels, dtype=np.int64).reshape(-1)
        if len(labels_raw) != len(positions):
            raise ValueError(
                f"{len(positions)} positions but {len(labels_raw)} labels"
            )
        if not np.isfinite(positions).all():
            raise ValueError("positions must be finite")
        if labels_raw.size and (labels_raw.min() < 0 or labels_raw.max() > MAX_LABEL):
            raise ValueError(f"labels must lie in [0, {MAX_LABEL}]")
        if self.frame_id < 0:
            raise ValueError("frame_id must be non-negative")
        labels = labels_raw.astype(np.uint8)
        positions.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.positions)

    def point(self, i: int) -> LabeledPoint:
        return LabeledPoint(self.positions[i], int(self.labels[i]))


def label_fraction(cloud: PointCloud) -> dict[int, float]:
    """Fraction of points per label present in the cloud.

    Fractions sum to 1.  An empty cloud has no meaningful fractions and
    raises :class:`EmptyCloudError`.
    """
    if len(cloud) == 0:
        raise EmptyCloudError("empty cloud has no label fractions")
    values, counts = np.unique(cloud.labels, return_counts=True)
    total = float(len(cloud))
    return {int(v): float(c) / total for v, c in zip(values, counts)}


def filter_by_label(cloud: PointCloud, label: int) -> PointCloud:
    """Points of one class, order preserved.  May be empty."""
    keep = cloud.labels == label
    return PointCloud(cloud.positions[keep], cloud.labels[keep], cloud.frame_id)


def concatenate_clouds(clouds: list[PointCloud], frame_id: int = 0) -> PointCloud:
    """Stack clouds (already in a common frame) into one."""
    if not clouds:
        return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.uint8), frame_id)
    return PointCloud(
        np.concatenate([c.positions for c in clouds]),
        np.concatenate([c.labels for c in clouds]),
        frame_id,
    )
