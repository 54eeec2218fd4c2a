"""Property-aware lidar SLAM toolkit.

Point clouds carry per-point physical property labels (heat, moisture, ...).
Scan matching penalizes correspondences whose labels disagree, which breaks
the ambiguity of geometrically self-similar scenes; a pose graph with
landmark-gated loop closures cleans up the remaining drift.  A synthetic
lidar simulator and an evaluation harness close the loop for experiments.
"""

__version__ = "0.1.0"

from .errors import PropSlamError

__all__ = ["PropSlamError", "__version__"]
