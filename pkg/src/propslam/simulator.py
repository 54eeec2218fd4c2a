"""Synthetic lidar over a 2.5D world of vertical walls and a floor plane.

Walls are vertical rectangles: a 2D segment extruded from z = 0 up to a
height.  The floor is the z = 0 rectangle spanning the bounding box of all
wall endpoints (omitted when that box has zero area).  Surface points pick
up property labels from patches: a point inside one or more patch radii
takes the label of the nearest patch center, ties going to the patch that
was declared first.

Scans are simulated by casting one ray per (ring, azimuth) cell from the
sensor pose, keeping the nearest surface hit within range, and perturbing
the measured range along the ray.  Labels come from the true hit point,
not the perturbed one; range noise in a real unit does not move a return
onto a differently labeled part of the scene.

Randomness is seeded per stream so frames can be regenerated in any order:
scan noise for frame k draws from ``default_rng([seed, 101, k])`` and the
odometry walk from ``default_rng([seed, 202])``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import LABEL_UNLABELED, MAX_LABEL, PointCloud
from .errors import DegenerateRayOriginError
from .geometry import RigidTransform, compose, relative, twist_exp, twist_log
from .trajectory import Trajectory

_SCAN_STREAM = 101
_ODOMETRY_STREAM = 202
_RAY_EPSILON = 1e-9
_PARALLEL_EPSILON = 1e-15


@dataclass(frozen=True)
class Wall:
    """Vertical rectangle over a 2D segment, from z = 0 to z = height."""

    start: tuple[float, float]
    end: tuple[float, float]
    height: float

    def __post_init__(self):
        start = (float(self.start[0]), float(self.start[1]))
        end = (float(self.end[0]), float(self.end[1]))
        if not all(np.isfinite(v) for v in (*start, *end, self.height)):
            raise ValueError("wall geometry must be finite")
        if self.height <= 0.0:
            raise ValueError(f"wall height must be positive, got {self.height}")
        if start == end:
            raise ValueError("wall endpoints must differ")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        object.__setattr__(self, "height", float(self.height))


@dataclass(frozen=True)
class PropertyPatch:
    """Spherical region that stamps its label onto surface points inside it."""

    label: int
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not (1 <= int(self.label) <= MAX_LABEL):
            raise ValueError(f"patch label must be in 1..{MAX_LABEL}, got {self.label}")
        center = tuple(float(c) for c in self.center)
        if len(center) != 3 or not all(np.isfinite(c) for c in center):
            raise ValueError("patch center must be a finite 3-vector")
        if not (self.radius > 0.0 and np.isfinite(self.radius)):
            raise ValueError(f"patch radius must be positive, got {self.radius}")
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class World:
    walls: tuple[Wall, ...] = ()
    patches: tuple[PropertyPatch, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "walls", tuple(self.walls))
        object.__setattr__(self, "patches", tuple(self.patches))

    def floor_bounds(self) -> tuple[float, float, float, float] | None:
        """(xmin, ymin, xmax, ymax) of the floor, or None without one."""
        if not self.walls:
            return None
        xy = np.array(
            [w.start for w in self.walls] + [w.end for w in self.walls]
        )
        xmin, ymin = xy.min(axis=0)
        xmax, ymax = xy.max(axis=0)
        if xmax - xmin <= 0.0 or ymax - ymin <= 0.0:
            return None
        return float(xmin), float(ymin), float(xmax), float(ymax)


@dataclass(frozen=True)
class SensorParams:
    """Ring/azimuth ray grid with range noise.

    Rings are spread evenly over the vertical span (a single ring sits at
    elevation zero); azimuths cover the full circle without repeating the
    wrap-around direction.
    """

    n_rings: int = 8
    n_azimuths: int = 180
    vertical_span_deg: float = 30.0
    max_range: float = 5.0
    noise_sigma: float = 0.01

    def __post_init__(self):
        if self.n_rings < 1 or self.n_azimuths < 1:
            raise ValueError("ray grid needs at least one ring and one azimuth")
        if not 0.0 <= self.vertical_span_deg < 180.0:
            raise ValueError("vertical span must be in [0, 180) degrees")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class OdometryParams:
    """Multiplicative bias plus motion-scaled noise on relative twists.

    Per step the true twist (v, w) becomes

        v' = v (1 + trans_bias) + n_v * trans_sigma * |v|
        w' = w (1 + rot_bias)   + n_w * rot_sigma   * |w|

    with n_v, n_w standard normal 3-vectors.  Both terms vanish for zero
    motion, so a stationary robot reports exactly the identity, and the
    normal draws happen on every step regardless, keeping the stream
    aligned across parameter choices.
    """

    trans_sigma: float = 0.0
    rot_sigma: float = 0.0
    trans_bias: float = 0.0
    rot_bias: float = 0.0

    def __post_init__(self):
        if self.trans_sigma < 0.0 or self.rot_sigma < 0.0:
            raise ValueError("noise scales must be non-negative")


def ray_directions(params: SensorParams) -> np.ndarray:
    """Unit directions in the sensor frame, ring-major then azimuth."""
    if params.n_rings == 1:
        elevations = np.zeros(1)
    else:
        half = np.deg2rad(params.vertical_span_deg) / 2.0
        elevations = np.linspace(-half, half, params.n_rings)
    azimuths = np.arange(params.n_azimuths) * (2.0 * np.pi / params.n_azimuths)
    cos_e = np.cos(elevations)[:, None]
    sin_e = np.sin(elevations)[:, None]
    dirs = np.stack(
        [
            (cos_e * np.cos(azimuths)[None, :]).ravel(),
            (cos_e * np.sin(azimuths)[None, :]).ravel(),
            (sin_e * np.ones_like(azimuths)[None, :]).ravel(),
        ],
        axis=1,
    )
    return dirs


def _point_segment_distance_2d(point: np.ndarray, start: np.ndarray, end: np.ndarray) -> float:
    seg = end - start
    t = float(np.dot(point - start, seg) / np.dot(seg, seg))
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(point - (start + t * seg)))


def _check_origin(world: World, origin: np.ndarray) -> None:
    xy = origin[:2]
    for wall in world.walls:
        if -_RAY_EPSILON <= origin[2] <= wall.height + _RAY_EPSILON:
            d = _point_segment_distance_2d(xy, np.array(wall.start), np.array(wall.end))
            if d <= _RAY_EPSILON:
                raise DegenerateRayOriginError(
                    f"sensor origin {origin.tolist()} lies on a wall surface"
                )
    bounds = world.floor_bounds()
    if bounds is not None and abs(origin[2]) <= _RAY_EPSILON:
        xmin, ymin, xmax, ymax = bounds
        if xmin <= xy[0] <= xmax and ymin <= xy[1] <= ymax:
            raise DegenerateRayOriginError(
                f"sensor origin {origin.tolist()} lies on the floor plane"
            )


def cast_rays(world: World, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Distance along each unit ray to the nearest surface, inf on a miss."""
    origin = np.asarray(origin, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    _check_origin(world, origin)
    n = directions.shape[0]
    best = np.full(n, np.inf)

    dxy = directions[:, :2]
    for wall in world.walls:
        start = np.array(wall.start)
        seg = np.array(wall.end) - start
        denom = dxy[:, 0] * seg[1] - dxy[:, 1] * seg[0]
        valid = np.abs(denom) > _PARALLEL_EPSILON
        if not valid.any():
            continue
        rel = start - origin[:2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (rel[0] * seg[1] - rel[1] * seg[0]) / denom
            u = (rel[0] * dxy[:, 1] - rel[1] * dxy[:, 0]) / denom
        z = origin[2] + t * directions[:, 2]
        hit = (
            valid
            & (t > _RAY_EPSILON)
            & (u >= 0.0)
            & (u <= 1.0)
            & (z >= 0.0)
            & (z <= wall.height)
        )
        best = np.where(hit & (t < best), t, best)

    bounds = world.floor_bounds()
    if bounds is not None:
        xmin, ymin, xmax, ymax = bounds
        dz = directions[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -origin[2] / dz
        px = origin[0] + t * directions[:, 0]
        py = origin[1] + t * directions[:, 1]
        hit = (
            (np.abs(dz) > _PARALLEL_EPSILON)
            & (t > _RAY_EPSILON)
            & (px >= xmin)
            & (px <= xmax)
            & (py >= ymin)
            & (py <= ymax)
        )
        best = np.where(hit & (t < best), t, best)
    return best


def assign_labels(points: np.ndarray, patches: tuple[PropertyPatch, ...]) -> np.ndarray:
    """Label of the nearest containing patch per point, 0 outside all."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.full(points.shape[0], LABEL_UNLABELED, dtype=np.uint8)
    if not patches or points.shape[0] == 0:
        return labels
    centers = np.array([p.center for p in patches])
    radii = np.array([p.radius for p in patches])
    deltas = points[:, None, :] - centers[None, :, :]
    distances = np.sqrt((deltas * deltas).sum(axis=2))
    inside = distances <= radii[None, :]
    # Ties on distance resolve to the earliest patch: argmin keeps the
    # first minimum and patch order is declaration order.
    masked = np.where(inside, distances, np.inf)
    nearest = masked.argmin(axis=1)
    has_label = inside.any(axis=1)
    labels[has_label] = np.array([p.label for p in patches], dtype=np.uint8)[
        nearest[has_label]
    ]
    return labels


def simulate_scan(
    world: World,
    pose: RigidTransform,
    params: SensorParams,
    frame_id: int,
    seed: int,
) -> PointCloud:
    """One labeled scan, points in the sensor frame."""
    dirs_sensor = ray_directions(params)
    dirs_world = dirs_sensor @ pose.rotation.T
    ranges = cast_rays(world, pose.translation, dirs_world)
    hit = np.isfinite(ranges) & (ranges <= params.max_range)
    true_points = pose.translation[None, :] + ranges[hit, None] * dirs_world[hit]
    labels = assign_labels(true_points, world.patches)
    rng = np.random.default_rng([seed, _SCAN_STREAM, frame_id])
    noisy = ranges[hit] + rng.normal(0.0, params.noise_sigma, size=int(hit.sum()))
    positions = noisy[:, None] * dirs_sensor[hit]
    return PointCloud(positions=positions, labels=labels, frame_id=frame_id)


def perturb_twists(
    truth: Trajectory, params: OdometryParams, seed: int
) -> list[np.ndarray]:
    """Noisy relative twist per consecutive frame pair."""
    rng = np.random.default_rng([seed, _ODOMETRY_STREAM])
    poses = [pose for _, pose in truth]
    twists = []
    for previous, current in zip(poses[:-1], poses[1:]):
        xi = twist_log(relative(previous, current))
        v, w = xi[:3], xi[3:]
        noise_v = rng.normal(size=3)
        noise_w = rng.normal(size=3)
        v_out = v * (1.0 + params.trans_bias) + noise_v * (
            params.trans_sigma * np.linalg.norm(v)
        )
        w_out = w * (1.0 + params.rot_bias) + noise_w * (
            params.rot_sigma * np.linalg.norm(w)
        )
        twists.append(np.concatenate([v_out, w_out]))
    return twists


def dead_reckon(truth: Trajectory, params: OdometryParams, seed: int) -> Trajectory:
    """Odometry trajectory: true first pose, then composed noisy twists."""
    poses = [pose for _, pose in truth]
    out = [poses[0]]
    for xi in perturb_twists(truth, params, seed):
        out.append(compose(out[-1], twist_exp(xi)))
    return Trajectory(frame_ids=truth.frame_ids, poses=tuple(out))


@dataclass(frozen=True)
class SimulationResult:
    scans: tuple[PointCloud, ...]
    truth: Trajectory
    odometry: Trajectory


def simulate_sequence(
    world: World,
    truth: Trajectory,
    sensor: SensorParams,
    odometry: OdometryParams,
    seed: int,
) -> SimulationResult:
    """Scans plus dead-reckoned odometry along a true trajectory."""
    scans = tuple(
        simulate_scan(world, pose, sensor, frame_id, seed) for frame_id, pose in truth
    )
    return SimulationResult(
        scans=scans,
        truth=truth,
        odometry=dead_reckon(truth, odometry, seed),
    )


def sample_world(world: World, spacing: float = 0.1) -> PointCloud:
    """Even surface sampling of walls and floor, labeled like scan returns.

    Sample counts along each direction are length / spacing rounded down
    plus one, endpoints included.
    """
    if spacing <= 0.0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    chunks = []
    for wall in world.walls:
        start = np.array((*wall.start, 0.0))
        end = np.array((*wall.end, 0.0))
        length = float(np.linalg.norm(end - start))
        n_along = int(np.floor(length / spacing + _RAY_EPSILON)) + 1
        n_up = int(np.floor(wall.height / spacing + _RAY_EPSILON)) + 1
        along = np.linspace(0.0, 1.0, n_along)
        base = start[None, :] + along[:, None] * (end - start)[None, :]
        heights = np.linspace(0.0, wall.height, n_up)
        grid = np.repeat(base, n_up, axis=0)
        grid[:, 2] = np.tile(heights, n_along)
        chunks.append(grid)
    bounds = world.floor_bounds()
    if bounds is not None:
        xmin, ymin, xmax, ymax = bounds
        nx = int(np.floor((xmax - xmin) / spacing + _RAY_EPSILON)) + 1
        ny = int(np.floor((ymax - ymin) / spacing + _RAY_EPSILON)) + 1
        xs = np.linspace(xmin, xmax, nx)
        ys = np.linspace(ymin, ymax, ny)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        chunks.append(
            np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
        )
    if chunks:
        points = np.concatenate(chunks, axis=0)
    else:
        points = np.zeros((0, 3))
    return PointCloud(
        positions=points,
        labels=assign_labels(points, world.patches),
        frame_id=0,
    )
