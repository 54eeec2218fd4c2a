"""Stamped pose sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Frame ids (strictly increasing) with one pose each, world frame."""

    frame_ids: tuple[int, ...]
    poses: tuple[RigidTransform, ...]

    def __post_init__(self):
        frame_ids = tuple(int(f) for f in self.frame_ids)
        poses = tuple(self.poses)
        if len(frame_ids) != len(poses):
            raise ValueError(
                f"{len(frame_ids)} frame ids but {len(poses)} poses"
            )
        if any(b <= a for a, b in zip(frame_ids, frame_ids[1:])):
            raise ValueError("frame ids must be strictly increasing")
        if any(f < 0 for f in frame_ids):
            raise ValueError("frame ids must be non-negative")
        object.__setattr__(self, "frame_ids", frame_ids)
        object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return len(self.frame_ids)

    def __iter__(self):
        return iter(zip(self.frame_ids, self.poses))

    def pose_of(self, frame_id: int) -> RigidTransform:
        try:
            return self.poses[self.frame_ids.index(frame_id)]
        except ValueError:
            raise KeyError(f"no pose for frame {frame_id}") from None

    def translations(self) -> np.ndarray:
        return np.array([pose.translation for pose in self.poses])
