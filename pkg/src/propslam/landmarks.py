"""Property landmarks and loop-closure candidates.

A landmark is a cluster of same-class labeled points within one scan:
single-linkage clustering at ``cluster_radius``, clusters below
``min_cluster_size`` dropped.  Landmarks are the anchors for loop
detection: two frames observing same-class landmarks whose world-frame
centroids (under the current trajectory estimate) fall within
``gate_radius`` of each other, at least ``min_frame_gap`` frames apart,
form a loop candidate.  A finite ``max_observation_range`` additionally
requires both frames to have seen their landmark from that close, which
reads as "returned to the same place" rather than "saw the same thing
from across the room"; two far viewpoints can share a landmark while
their scans barely overlap, and matching such pairs is guesswork.
Candidates only gate; the actual loop measurement comes from running
scan matching on the two frames (see the pipeline).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .cloud import PointCloud
from .geometry import apply
from .trajectory import Trajectory


@dataclass(frozen=True)
class LandmarkParams:
    cluster_radius: float = 0.5
    min_cluster_size: int = 5
    gate_radius: float = 3.0
    min_frame_gap: int = 10
    max_observation_range: float = np.inf

    def __post_init__(self):
        if self.cluster_radius <= 0.0 or self.gate_radius <= 0.0:
            raise ValueError("radii must be positive")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be at least 1")
        if self.min_frame_gap < 1:
            raise ValueError("min_frame_gap must be at least 1")
        if self.max_observation_range <= 0.0:
            raise ValueError("max_observation_range must be positive")


@dataclass(frozen=True)
class Landmark:
    """Centroid of one same-class cluster, in the scan's own frame."""

    label: int
    centroid: np.ndarray
    point_count: int
    frame_id: int


@dataclass(frozen=True)
class LoopCandidate:
    """Frames ``frame_a < frame_b`` likely observing the same landmark."""

    frame_a: int
    frame_b: int
    label: int
    centroid_gap: float


def extract_landmarks(cloud: PointCloud, params: LandmarkParams) -> list[Landmark]:
    """Cluster labeled points per class; deterministic output order.

    Landmarks are sorted by (label, centroid lexicographically), so the
    result does not depend on point order in the input cloud.
    """
    found: list[Landmark] = []
    for label in sorted(int(v) for v in np.unique(cloud.labels) if v != 0):
        points = cloud.positions[cloud.labels == label]
        if len(points) == 1:
            assignments = np.array([1])
        else:
            merges = linkage(points, method="single")
            assignments = fcluster(merges, t=params.cluster_radius, criterion="distance")
        for cluster_id in np.unique(assignments):
            members = points[assignments == cluster_id]
            if len(members) < params.min_cluster_size:
                continue
            found.append(
                Landmark(
                    label=label,
                    centroid=members.mean(axis=0),
                    point_count=len(members),
                    frame_id=cloud.frame_id,
                )
            )
    found.sort(key=lambda lm: (lm.label, tuple(lm.centroid)))
    return found


def detect_loops(
    landmarks: list[Landmark], estimate: Trajectory, params: LandmarkParams
) -> list[LoopCandidate]:
    """Gate frame pairs by same-class landmark proximity in world frame.

    Centroids are mapped into the world through the *estimated* poses, so a
    drifted estimate can miss revisits beyond ``gate_radius``; that is the
    intended behavior of a gate, not an error.  At most one candidate per
    frame pair is kept (the smallest centroid gap).  Output is sorted by
    (frame_a, frame_b).
    """
    by_label: dict[int, list[tuple[int, np.ndarray]]] = {}
    for landmark in landmarks:
        if float(np.linalg.norm(landmark.centroid)) > params.max_observation_range:
            continue
        world = apply(estimate.pose_of(landmark.frame_id), landmark.centroid)
        by_label.setdefault(landmark.label, []).append((landmark.frame_id, world))
    best: dict[tuple[int, int], tuple[float, int]] = {}
    for label, entries in sorted(by_label.items()):
        for i, (frame_i, world_i) in enumerate(entries):
            for frame_j, world_j in entries[i + 1 :]:
                if frame_i == frame_j:
                    continue
                a, b = min(frame_i, frame_j), max(frame_i, frame_j)
                if b - a < params.min_frame_gap:
                    continue
                gap = float(np.linalg.norm(world_i - world_j))
                if gap > params.gate_radius:
                    continue
                key = (a, b)
                if key not in best or (gap, label) < best[key]:
                    best[key] = (gap, label)
    return sorted(
        (
            LoopCandidate(frame_a=a, frame_b=b, label=label, centroid_gap=gap)
            for (a, b), (gap, label) in best.items()
        ),
        key=lambda c: (c.frame_a, c.frame_b),
    )
