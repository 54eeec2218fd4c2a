"""Built-in scenes: the ring-corridor course and the ambiguity cloud pair.

The ring course is a rectangular corridor loop: an outer box with a box
island inside it, so the robot drives a full circuit and revisits its
start.  The corridor walls carry rows of small property markers, hot
fittings and damp seepage stains in alternating classes, each a narrow
vertical stripe of spots at mid-wall heights, spaced unevenly so no
stretch of wall repeats.  Bare walls look the same
everywhere along a corridor, so geometry-only matching is free to slide
along the leg and keeps whatever along-leg error its initial guess had;
the marker rows are the evidence that pins that direction, and their
uneven spacing makes each stretch property-distinct, so the two
geometrically identical straight corridors can be told apart by labels
alone.  Markers sit on the walls themselves and add no geometry of their
own: a label-blind matcher sees nothing but the bare course.

The corridor pair is a two-cloud fixture with the same flavor of
ambiguity in its purest form: two long parallel walls, sampled twice with
independent jitter, with the source frame displaced along the corridor
axis.  Small heat-labeled blobs on the walls are the only evidence of the
displacement.
"""

from __future__ import annotations

import numpy as np

from .cloud import LABEL_HEAT, LABEL_WATER, PointCloud
from .geometry import RigidTransform, rot_z
from .simulator import OdometryParams, PropertyPatch, SensorParams, Wall, World
from .trajectory import Trajectory


_MARKER_RADIUS = 0.10
_MARKER_HEIGHTS = tuple(np.arange(0.45, 1.051, 0.1))
_GOLDEN = 0.6180339887498949


def _marker_row(
    start: tuple[float, float],
    end: tuple[float, float],
    first_label: int,
    phase: float,
    stagger: int,
) -> list[PropertyPatch]:
    """Marker stations along one wall, classes alternating station by station.

    Each station is a narrow vertical stripe, a stack of same-class spots
    spanning mid-wall heights, so some scan ring strikes it from any
    nearby pose and a height error cannot pair it with the wrong station:
    along the stripe every height reads the same class at the same wall
    position.  The stripe is kept narrow: a wide patch acquires a skirt
    of boundary returns whose class-gated matches pull systematically
    toward the patch interior, while a stripe close to the sampling
    spacing matches its own few returns and nothing else.  Successive
    gaps vary between 0.45 and 0.57 on an irrational schedule, so the row
    never repeats and no two walls carry the same pattern; the
    ``stagger`` index offsets the schedule per wall.
    """
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    length = float(np.linalg.norm(b - a))
    direction = (b - a) / length
    markers: list[PropertyPatch] = []
    distance = phase
    k = 0
    while distance < length - 0.4:
        center = a + direction * distance
        label = first_label if k % 2 == 0 else _other_label(first_label)
        for z in _MARKER_HEIGHTS:
            markers.append(
                PropertyPatch(label, (center[0], center[1], z), _MARKER_RADIUS)
            )
        distance += 0.45 + 0.12 * (((k + stagger) * _GOLDEN) % 1.0)
        k += 1
    return markers


def _other_label(label: int) -> int:
    return LABEL_WATER if label == LABEL_HEAT else LABEL_HEAT


def ring_world() -> World:
    """Outer 12 x 7 box with a slim 6 x 0.9 island, walls 1.5 high.

    The island is deliberately thin.  Its corners are the only structure
    that could fix the along-corridor direction from mid-leg, and with the
    walls this far from the path they sit outside the sensor's forward fan
    whenever they are within range.  Mid-leg scans therefore contain
    nothing but the two smooth corridor walls and their marker rows, which
    is the whole point of the course: geometry alone leaves one direction
    loose, markers pin it.

    The island's two short end walls stay bare.  They are the only
    surfaces seen close-up from more than one corridor, so markers there
    would hand loop detection candidate pairs whose scans barely overlap.
    """
    height = 1.5
    walls = (
        Wall((0.0, 0.0), (12.0, 0.0), height),
        Wall((12.0, 0.0), (12.0, 7.0), height),
        Wall((12.0, 7.0), (0.0, 7.0), height),
        Wall((0.0, 7.0), (0.0, 0.0), height),
        Wall((3.0, 3.05), (9.0, 3.05), height),
        Wall((9.0, 3.05), (9.0, 3.95), height),
        Wall((9.0, 3.95), (3.0, 3.95), height),
        Wall((3.0, 3.95), (3.0, 3.05), height),
    )
    rows = (
        _marker_row((0.0, 0.0), (12.0, 0.0), LABEL_HEAT, 0.80, 0),
        _marker_row((12.0, 0.0), (12.0, 7.0), LABEL_WATER, 1.05, 3),
        _marker_row((12.0, 7.0), (0.0, 7.0), LABEL_WATER, 0.90, 6),
        _marker_row((0.0, 7.0), (0.0, 0.0), LABEL_HEAT, 1.15, 9),
        _marker_row((3.0, 3.05), (9.0, 3.05), LABEL_WATER, 0.70, 12),
        _marker_row((9.0, 3.95), (3.0, 3.95), LABEL_HEAT, 0.85, 18),
    )
    patches = tuple(marker for row in rows for marker in row)
    return World(walls=walls, patches=patches)


def ring_trajectory(
    step: float = 0.3,
    turn_step_deg: float = 6.0,
    stride_spread: float = 0.25,
) -> Trajectory:
    """Rectangular circuit around the island, turning in place at corners.

    The circuit starts at (1.5, 1.25) heading +x, runs the four corridor
    legs counter-clockwise, and ends back at the start pose after the
    final turn, so the first and last frames overlap for loop closure.
    Sensor height is 0.6.  The default turn step is a multiple of the
    default sensor's azimuth spacing, so scans taken while turning in
    place sample the same world points and matching them is exact.

    Leg strides vary by ``stride_spread`` around ``step``, the way a real
    crawler never holds a perfectly even pace.  The variation matters:
    the sensor resamples the floor in rings around itself, so any two
    scans one fixed stride apart land those rings at the same relative
    offsets every single pair, and whatever tiny preference the matcher
    has at that one offset repeats all the way around the course and
    compounds into a drift of its own.  An uneven pace draws every pair's
    offset afresh, so those preferences change sign pair by pair and
    average away.  The draw comes from a generator seeded inside the
    function, so the course is the same on every call.
    """
    corners = [
        np.array([1.5, 1.25]),
        np.array([10.5, 1.25]),
        np.array([10.5, 5.75]),
        np.array([1.5, 5.75]),
    ]
    rng = np.random.default_rng(7)
    z = 0.6
    poses = []
    heading = 0.0
    poses.append(_ground_pose(corners[0], heading, z))
    n_turn = int(round(90.0 / turn_step_deg))
    for i in range(4):
        start, end = corners[i], corners[(i + 1) % 4]
        length = float(np.linalg.norm(end - start))
        direction = (end - start) / length
        travelled = 0.0
        while length - travelled > 0.45 * step:
            stride = step * (1.0 + stride_spread * (2.0 * rng.random() - 1.0))
            travelled = min(length, travelled + stride)
            poses.append(_ground_pose(start + direction * travelled, heading, z))
        if length - travelled > 1e-12:
            poses.append(_ground_pose(end, heading, z))
        for _ in range(n_turn):
            heading += np.deg2rad(turn_step_deg)
            poses.append(_ground_pose(end, heading, z))
    return Trajectory(
        frame_ids=tuple(range(len(poses))), poses=tuple(poses)
    )


def _ground_pose(xy: np.ndarray, heading: float, z: float) -> RigidTransform:
    return RigidTransform(
        rotation=rot_z(heading),
        translation=np.array([xy[0], xy[1], z]),
    )


def ring_sensor() -> SensorParams:
    """Dense enough vertically that the floor carries several sample rings.

    The azimuth count keeps the trajectory's 6 degree turn step on the
    3 degree azimuth grid, so in-place turns resample the same points.
    """
    return SensorParams(
        n_rings=16,
        n_azimuths=120,
        vertical_span_deg=60.0,
        max_range=5.0,
        noise_sigma=0.01,
    )


def ring_odometry() -> OdometryParams:
    """Drifting crawler odometry: scale bias plus motion-proportional noise.

    The biases model track slip and turn-rate miscalibration, which on a
    skid-steer crawler are stable systematic errors: dead reckoning
    overshoots every leg by the same large fraction and banks extra
    heading at every corner, so open-loop it misses the loop closure by
    meters.  Slip on the scale modeled here is what loose rubber tracks
    do on smooth concrete under load.  Scan matching that can observe
    the along-corridor direction earns the overshoot back; scan matching
    that cannot keeps most of it, and every corner turns the kept error
    sideways where the map shows it.
    """
    return OdometryParams(
        trans_sigma=0.3,
        rot_sigma=0.05,
        trans_bias=0.45,
        rot_bias=0.06,
    )


_CORRIDOR_WALL_Y = (0.0, 4.0)
_CORRIDOR_Z_ROWS = np.arange(0.15, 1.36, 0.3)
_CORRIDOR_SPACING = 0.1
_BLOB_RADIUS = 0.03
_BLOB_POINTS = 40
_BLOB_Z = 0.75
# Blobs sit aperiodically along x, more than twice the 1.5 m frame offset
# apart, so each blob's displaced twin is its own nearest same-label
# neighbor throughout the slide back to alignment.
_BLOB_X = {0.0: (0.8, 4.0, 7.2, 10.4), 4.0: (1.6, 4.8, 8.0, 11.2)}


def _corridor_walls(rng: np.random.Generator, x_lo: float, x_hi: float) -> np.ndarray:
    # Stratified-uniform sampling: one point per grid cell, uniform inside
    # it.  The marginal density along x is then exactly flat, so a
    # label-blind matcher feels no systematic force at any slide offset.
    columns = np.arange(x_lo, x_hi + 1e-9, _CORRIDOR_SPACING)
    chunks = []
    for y in _CORRIDOR_WALL_Y:
        gx, gz = np.meshgrid(columns, _CORRIDOR_Z_ROWS, indexing="ij")
        points = np.stack(
            [gx.ravel(), np.full(gx.size, y), gz.ravel()], axis=1
        )
        half_x = _CORRIDOR_SPACING / 2.0
        half_z = float(_CORRIDOR_Z_ROWS[1] - _CORRIDOR_Z_ROWS[0]) / 2.0
        points[:, 0] += rng.uniform(-half_x, half_x, gx.size)
        points[:, 2] += rng.uniform(-half_z, half_z, gx.size)
        chunks.append(points)
    return np.concatenate(chunks, axis=0)


def _corridor_floor(rng: np.random.Generator, x_lo: float, x_hi: float) -> np.ndarray:
    # A coarser planar sweep between the walls.  It pins the vertical
    # offset and the roll and pitch angles, none of which the slide
    # ambiguity is about, while staying uniform along x like the walls.
    spacing = 0.3
    columns = np.arange(x_lo, x_hi + 1e-9, spacing)
    rows = np.arange(0.15, _CORRIDOR_WALL_Y[1] - 0.149, spacing)
    gx, gy = np.meshgrid(columns, rows, indexing="ij")
    points = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    half = spacing / 2.0
    points[:, 0] += rng.uniform(-half, half, gx.size)
    points[:, 1] += rng.uniform(-half, half, gx.size)
    return points


def _corridor_blobs(rng: np.random.Generator, x_lo: float, x_hi: float) -> np.ndarray:
    chunks = []
    for y, centers in sorted(_BLOB_X.items()):
        for cx in centers:
            if not x_lo <= cx <= x_hi:
                continue
            angle = rng.uniform(0.0, 2.0 * np.pi, _BLOB_POINTS)
            radius = _BLOB_RADIUS * np.sqrt(rng.uniform(0.0, 1.0, _BLOB_POINTS))
            points = np.stack(
                [
                    cx + radius * np.cos(angle),
                    np.full(_BLOB_POINTS, y),
                    _BLOB_Z + radius * np.sin(angle),
                ],
                axis=1,
            )
            chunks.append(points)
    return np.concatenate(chunks, axis=0)


def corridor_pair(
    seed: int = 0,
) -> tuple[PointCloud, PointCloud, RigidTransform]:
    """Source scan, target map, and the true source-to-target transform.

    The target covers the corridor over x in [-3, 15]; the source covers
    [0, 10.5] of the same world but is expressed in a frame displaced
    1.5 m along the corridor, so the true alignment is a pure x
    translation.  Wall and floor points are unlabeled; blob points carry
    the heat label.  Geometry alone is consistent with any slide along x,
    so a label-blind matcher started at the identity has no reason to
    leave it.
    """
    rng = np.random.default_rng([seed, 303])
    offset = np.array([1.5, 0.0, 0.0])

    target_walls = _corridor_walls(rng, -3.0, 15.0)
    target_floor = _corridor_floor(rng, -3.0, 15.0)
    target_blobs = _corridor_blobs(rng, -3.0, 15.0)
    target_positions = np.concatenate(
        [target_walls, target_floor, target_blobs], axis=0
    )
    target_labels = np.concatenate(
        [
            np.zeros(len(target_walls) + len(target_floor), dtype=np.uint8),
            np.full(len(target_blobs), LABEL_HEAT, dtype=np.uint8),
        ]
    )

    source_walls = _corridor_walls(rng, 0.0, 10.5)
    source_floor = _corridor_floor(rng, 0.0, 10.5)
    source_blobs = _corridor_blobs(rng, 0.0, 10.5)
    source_positions = (
        np.concatenate([source_walls, source_floor, source_blobs], axis=0) - offset
    )
    source_labels = np.concatenate(
        [
            np.zeros(len(source_walls) + len(source_floor), dtype=np.uint8),
            np.full(len(source_blobs), LABEL_HEAT, dtype=np.uint8),
        ]
    )

    source = PointCloud(positions=source_positions, labels=source_labels, frame_id=0)
    target = PointCloud(positions=target_positions, labels=target_labels, frame_id=1)
    truth = RigidTransform(rotation=np.eye(3), translation=offset)
    return source, target, truth
