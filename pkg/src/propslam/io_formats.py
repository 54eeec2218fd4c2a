"""Plain-text file formats: clouds, trajectories, worlds, configs, graphs.

Everything is line-oriented text with ``#`` comments, chosen so failing
tests can be diffed by eye.  Floats are serialized with ``repr``, the
shortest decimal that parses back to the identical bits, which makes
read(write(x)) exact and keeps repeated runs byte-identical.

Writes go to a temporary file in the destination directory followed by an
atomic rename, so readers never observe a half-written file.

Formats:

    cloud       ``# frame <id>`` header, then ``x y z label`` per point
    trajectory  ``frame tx ty tz qx qy qz qw`` per pose (quaternion w last)
    world       ``wall x1 y1 x2 y2 height`` and ``patch label cx cy cz r``
    config      flat ``key = value`` lines; unknown keys are rejected
    graph       ``VERTEX`` / ``EDGE`` lines, information upper triangle
    manifest    a complete config whose comment lines carry hashes and
                versions; feeding it back through ``--config`` reproduces
                the run bit for bit
"""

from __future__ import annotations

import hashlib
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .association import AssociationParams
from .cloud import MAX_LABEL, PointCloud
from .errors import ConfigError, ParseError
from .geometry import (
    RigidTransform,
    quaternion_to_rotation,
    rotation_to_quaternion,
)
from .icp import IcpParams
from .landmarks import LandmarkParams
from .pipeline import VARIANTS, PipelineParams
from .posegraph import OptimizeParams, PoseEdge, PoseGraph
from .simulator import OdometryParams, PropertyPatch, SensorParams, Wall, World
from .trajectory import Trajectory

_QUATERNION_NORM_TOLERANCE = 1e-6


def format_float(value: float) -> str:
    return repr(float(value))


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    handle, temp_name = tempfile.mkstemp(
        dir=path.parent, prefix=path.name + ".", suffix=".tmp"
    )
    try:
        with os.fdopen(handle, "w") as stream:
            stream.write(text)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _data_lines(path: Path):
    """(line_number, fields) for non-comment lines; comments pass through."""
    for line_number, raw in enumerate(path.read_text().splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        yield line_number, stripped


def _parse_float(
    token: str, path: str, line: int, column: int
) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(
            f"expected a number, got {token!r}", path, line, column
        ) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite value {token!r}", path, line, column)
    return value


def _parse_int(token: str, path: str, line: int, column: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(
            f"expected an integer, got {token!r}", path, line, column
        ) from None


def _expect_fields(fields: list[str], count: int, path: str, line: int) -> None:
    if len(fields) != count:
        raise ParseError(
            f"expected {count} fields, got {len(fields)}", path, line
        )


# ---------------------------------------------------------------- clouds


def write_cloud(cloud: PointCloud, path: str | Path) -> None:
    lines = [f"# frame {cloud.frame_id}"]
    for position, label in zip(cloud.positions, cloud.labels):
        lines.append(
            f"{format_float(position[0])} {format_float(position[1])} "
            f"{format_float(position[2])} {int(label)}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_cloud(path: str | Path) -> PointCloud:
    path = Path(path)
    name = str(path)
    frame_id = 0
    positions = []
    labels = []
    for line_number, text in _data_lines(path):
        if text.startswith("#"):
            fields = text[1:].split()
            if len(fields) == 2 and fields[0] == "frame":
                frame_id = _parse_int(fields[1], name, line_number, 2)
            continue
        fields = text.split()
        _expect_fields(fields, 4, name, line_number)
        positions.append(
            [
                _parse_float(fields[i], name, line_number, i + 1)
                for i in range(3)
            ]
        )
        label = _parse_int(fields[3], name, line_number, 4)
        if not 0 <= label <= MAX_LABEL:
            raise ParseError(
                f"label {label} outside 0..{MAX_LABEL}", name, line_number, 4
            )
        labels.append(label)
    return PointCloud(
        positions=np.array(positions, dtype=np.float64).reshape(-1, 3),
        labels=np.array(labels, dtype=np.uint8),
        frame_id=frame_id,
    )


# ------------------------------------------------------------ trajectories


def _pose_tokens(pose: RigidTransform) -> str:
    q = rotation_to_quaternion(pose.rotation)
    t = pose.translation
    return " ".join(
        format_float(v) for v in (t[0], t[1], t[2], q[0], q[1], q[2], q[3])
    )


def _parse_pose(
    fields: list[str], path: str, line: int, first_column: int
) -> RigidTransform:
    values = [
        _parse_float(fields[i], path, line, first_column + i)
        for i in range(7)
    ]
    translation = np.array(values[:3])
    quaternion = np.array(values[3:])
    norm = float(np.linalg.norm(quaternion))
    if abs(norm - 1.0) > _QUATERNION_NORM_TOLERANCE:
        raise ParseError(
            f"quaternion norm {norm!r} not within {_QUATERNION_NORM_TOLERANCE} of 1",
            path,
            line,
            first_column + 3,
        )
    return RigidTransform(
        rotation=quaternion_to_rotation(quaternion / norm),
        translation=translation,
    )


def write_trajectory(trajectory: Trajectory, path: str | Path) -> None:
    lines = ["# frame tx ty tz qx qy qz qw"]
    for frame_id, pose in trajectory:
        lines.append(f"{frame_id} {_pose_tokens(pose)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trajectory(path: str | Path) -> Trajectory:
    path = Path(path)
    name = str(path)
    frame_ids = []
    poses = []
    for line_number, text in _data_lines(path):
        if text.startswith("#"):
            continue
        fields = text.split()
        _expect_fields(fields, 8, name, line_number)
        frame_ids.append(_parse_int(fields[0], name, line_number, 1))
        poses.append(_parse_pose(fields[1:], name, line_number, 2))
    try:
        return Trajectory(frame_ids=tuple(frame_ids), poses=tuple(poses))
    except ValueError as bad:
        raise ParseError(str(bad), name) from None


# ---------------------------------------------------------------- worlds


def write_world(world: World, path: str | Path) -> None:
    lines = ["# wall x1 y1 x2 y2 height | patch label cx cy cz radius"]
    for wall in world.walls:
        lines.append(
            "wall "
            + " ".join(
                format_float(v)
                for v in (*wall.start, *wall.end, wall.height)
            )
        )
    for patch in world.patches:
        lines.append(
            f"patch {patch.label} "
            + " ".join(format_float(v) for v in (*patch.center, patch.radius))
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_world(path: str | Path) -> World:
    path = Path(path)
    name = str(path)
    walls = []
    patches = []
    for line_number, text in _data_lines(path):
        if text.startswith("#"):
            continue
        fields = text.split()
        kind = fields[0]
        if kind == "wall":
            _expect_fields(fields, 6, name, line_number)
            values = [
                _parse_float(fields[i], name, line_number, i + 1)
                for i in range(1, 6)
            ]
            walls.append(
                Wall((values[0], values[1]), (values[2], values[3]), values[4])
            )
        elif kind == "patch":
            _expect_fields(fields, 6, name, line_number)
            label = _parse_int(fields[1], name, line_number, 2)
            values = [
                _parse_float(fields[i], name, line_number, i + 1)
                for i in range(2, 6)
            ]
            patches.append(
                PropertyPatch(label, (values[0], values[1], values[2]), values[3])
            )
        else:
            raise ParseError(
                f"expected 'wall' or 'patch', got {kind!r}", name, line_number, 1
            )
    try:
        return World(walls=tuple(walls), patches=tuple(patches))
    except ValueError as bad:
        raise ParseError(str(bad), name) from None


# ---------------------------------------------------------------- configs


@dataclass(frozen=True)
class RunConfig:
    """Every tunable in one place; the file form is flat ``key = value``.

    The defaults are the ring-course recipe, so a config file only needs
    the keys it wants to change and an empty one reproduces the stock
    demo.  ``variant`` stays None unless the config file names one
    explicitly; the command line may then only agree with it.
    """

    seed: int = 0
    variant: str | None = None
    sensor: SensorParams = SensorParams(
        n_rings=16,
        n_azimuths=120,
        vertical_span_deg=60.0,
        max_range=5.0,
        noise_sigma=0.01,
    )
    odometry: OdometryParams = OdometryParams(
        trans_sigma=0.3, rot_sigma=0.05, trans_bias=0.45, rot_bias=0.06
    )
    icp: IcpParams = IcpParams(
        association=AssociationParams(
            base_radius=0.2, widened_radius=0.7, penalty=1.0
        ),
        max_iterations=80,
    )
    landmarks: LandmarkParams = LandmarkParams(
        gate_radius=1.5, min_frame_gap=40, max_observation_range=1.6
    )
    optimizer: OptimizeParams = OptimizeParams()
    loop_max_cov_trace: float = 0.5
    loop_max_correction: float = 0.8
    loop_max_rotation: float = 0.09
    loop_suppression_window: int = 5
    fallback_sigma: float = 0.01
    match_range_fraction: float = 0.9

    def pipeline_params(self) -> PipelineParams:
        return PipelineParams(
            icp=self.icp,
            landmarks=self.landmarks,
            optimizer=self.optimizer,
            loop_max_cov_trace=self.loop_max_cov_trace,
            loop_max_correction=self.loop_max_correction,
            loop_max_rotation=self.loop_max_rotation,
            loop_suppression_window=self.loop_suppression_window,
            fallback_sigma=self.fallback_sigma,
            match_range_limit=self.match_range_fraction * self.sensor.max_range,
        )


def config_items(config: RunConfig) -> list[tuple[str, str]]:
    """All keys with their serialized values, in documentation order."""
    assoc = config.icp.association
    items = [
        ("seed", str(config.seed)),
        ("sensor.n_rings", str(config.sensor.n_rings)),
        ("sensor.n_azimuths", str(config.sensor.n_azimuths)),
        ("sensor.vertical_span_deg", format_float(config.sensor.vertical_span_deg)),
        ("sensor.max_range", format_float(config.sensor.max_range)),
        ("sensor.noise_sigma", format_float(config.sensor.noise_sigma)),
        ("odometry.trans_sigma", format_float(config.odometry.trans_sigma)),
        ("odometry.rot_sigma", format_float(config.odometry.rot_sigma)),
        ("odometry.trans_bias", format_float(config.odometry.trans_bias)),
        ("odometry.rot_bias", format_float(config.odometry.rot_bias)),
        ("association.base_radius", format_float(assoc.base_radius)),
        ("association.widened_radius", format_float(assoc.widened_radius)),
        ("association.penalty", format_float(assoc.penalty)),
        ("association.tie_break", assoc.tie_break),
        ("icp.max_iterations", str(config.icp.max_iterations)),
        ("icp.translation_tolerance", format_float(config.icp.translation_tolerance)),
        ("icp.rotation_tolerance", format_float(config.icp.rotation_tolerance)),
        ("icp.min_correspondences", str(config.icp.min_correspondences)),
        ("icp.sensor_noise_sigma", format_float(config.icp.sensor_noise_sigma)),
        ("landmarks.cluster_radius", format_float(config.landmarks.cluster_radius)),
        ("landmarks.min_cluster_size", str(config.landmarks.min_cluster_size)),
        ("landmarks.gate_radius", format_float(config.landmarks.gate_radius)),
        ("landmarks.min_frame_gap", str(config.landmarks.min_frame_gap)),
        (
            "landmarks.max_observation_range",
            format_float(config.landmarks.max_observation_range),
        ),
        ("optimizer.max_iterations", str(config.optimizer.max_iterations)),
        ("optimizer.damping_init", format_float(config.optimizer.damping_init)),
        ("optimizer.damping_ceiling", format_float(config.optimizer.damping_ceiling)),
        ("optimizer.residual_rel_tol", format_float(config.optimizer.residual_rel_tol)),
        ("optimizer.step_tol", format_float(config.optimizer.step_tol)),
        ("pipeline.loop_max_cov_trace", format_float(config.loop_max_cov_trace)),
        ("pipeline.loop_max_correction", format_float(config.loop_max_correction)),
        ("pipeline.loop_max_rotation", format_float(config.loop_max_rotation)),
        ("pipeline.loop_suppression_window", str(config.loop_suppression_window)),
        ("pipeline.fallback_sigma", format_float(config.fallback_sigma)),
        ("pipeline.match_range_fraction", format_float(config.match_range_fraction)),
    ]
    if config.variant is not None:
        items.insert(1, ("variant", config.variant))
    return items


def config_text(config: RunConfig) -> str:
    return "\n".join(f"{key} = {value}" for key, value in config_items(config)) + "\n"


def write_config(config: RunConfig, path: str | Path) -> None:
    atomic_write_text(path, config_text(config))


_KNOWN_KEYS = {key for key, _ in config_items(RunConfig(variant="icp"))}


def _config_from_mapping(mapping: dict[str, str], name: str) -> RunConfig:
    def fget(key):
        try:
            return float(mapping[key])
        except ValueError:
            raise ConfigError(
                f"{name}: invalid number for {key}: {mapping[key]!r}"
            ) from None

    def iget(key):
        try:
            return int(mapping[key])
        except ValueError:
            raise ConfigError(
                f"{name}: invalid integer for {key}: {mapping[key]!r}"
            ) from None

    variant = mapping.get("variant")
    if variant is not None and variant not in VARIANTS:
        raise ConfigError(
            f"{name}: variant {variant!r} is not one of {', '.join(VARIANTS)}"
        )
    try:
        return RunConfig(
            seed=iget("seed"),
            variant=variant,
            sensor=SensorParams(
                n_rings=iget("sensor.n_rings"),
                n_azimuths=iget("sensor.n_azimuths"),
                vertical_span_deg=fget("sensor.vertical_span_deg"),
                max_range=fget("sensor.max_range"),
                noise_sigma=fget("sensor.noise_sigma"),
            ),
            odometry=OdometryParams(
                trans_sigma=fget("odometry.trans_sigma"),
                rot_sigma=fget("odometry.rot_sigma"),
                trans_bias=fget("odometry.trans_bias"),
                rot_bias=fget("odometry.rot_bias"),
            ),
            icp=IcpParams(
                association=AssociationParams(
                    base_radius=fget("association.base_radius"),
                    widened_radius=fget("association.widened_radius"),
                    penalty=fget("association.penalty"),
                    tie_break=mapping["association.tie_break"],
                ),
                max_iterations=iget("icp.max_iterations"),
                translation_tolerance=fget("icp.translation_tolerance"),
                rotation_tolerance=fget("icp.rotation_tolerance"),
                min_correspondences=iget("icp.min_correspondences"),
                sensor_noise_sigma=fget("icp.sensor_noise_sigma"),
            ),
            landmarks=LandmarkParams(
                cluster_radius=fget("landmarks.cluster_radius"),
                min_cluster_size=iget("landmarks.min_cluster_size"),
                gate_radius=fget("landmarks.gate_radius"),
                min_frame_gap=iget("landmarks.min_frame_gap"),
                max_observation_range=fget("landmarks.max_observation_range"),
            ),
            optimizer=OptimizeParams(
                max_iterations=iget("optimizer.max_iterations"),
                damping_init=fget("optimizer.damping_init"),
                damping_ceiling=fget("optimizer.damping_ceiling"),
                residual_rel_tol=fget("optimizer.residual_rel_tol"),
                step_tol=fget("optimizer.step_tol"),
            ),
            loop_max_cov_trace=fget("pipeline.loop_max_cov_trace"),
            loop_max_correction=fget("pipeline.loop_max_correction"),
            loop_max_rotation=fget("pipeline.loop_max_rotation"),
            loop_suppression_window=iget("pipeline.loop_suppression_window"),
            fallback_sigma=fget("pipeline.fallback_sigma"),
            match_range_fraction=fget("pipeline.match_range_fraction"),
        )
    except ValueError as bad:
        raise ConfigError(f"{name}: {bad}") from None


def read_config(path: str | Path) -> tuple[RunConfig, set[str]]:
    """Parse a config file; returns the config and its explicit keys.

    Keys absent from the file keep their defaults.  The explicit-key set
    feeds the variant/config conflict check in the CLI.
    """
    path = Path(path)
    name = str(path)
    explicit: dict[str, str] = {}
    for line_number, text in _data_lines(path):
        if text.startswith("#"):
            continue
        if "=" not in text:
            raise ParseError("expected 'key = value'", name, line_number)
        key, _, value = text.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"{name}:{line_number}: unknown key {key!r}")
        if key in explicit:
            raise ConfigError(f"{name}:{line_number}: duplicate key {key!r}")
        if not value:
            raise ParseError(f"empty value for {key!r}", name, line_number)
        explicit[key] = value
    defaults = dict(config_items(RunConfig()))
    mapping = {**defaults, **explicit}
    try:
        config = _config_from_mapping(mapping, name)
    except ValueError as bad:
        raise ConfigError(f"{name}: {bad}") from None
    return config, set(explicit)


# ------------------------------------------------------------ pose graphs


def write_graph(graph: PoseGraph, path: str | Path) -> None:
    lines = [
        "# VERTEX frame tx ty tz qx qy qz qw",
        "# EDGE kind a b tx ty tz qx qy qz qw  i00..i55 upper triangle",
    ]
    for node_id in sorted(graph.nodes):
        lines.append(f"VERTEX {node_id} {_pose_tokens(graph.nodes[node_id])}")
    for edge in graph.edges:
        upper = [
            format_float(edge.information[i, j])
            for i in range(6)
            for j in range(i, 6)
        ]
        lines.append(
            f"EDGE {edge.kind} {edge.a} {edge.b} "
            f"{_pose_tokens(edge.measurement)} " + " ".join(upper)
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_graph(path: str | Path) -> PoseGraph:
    path = Path(path)
    name = str(path)
    graph = PoseGraph()
    for line_number, text in _data_lines(path):
        if text.startswith("#"):
            continue
        fields = text.split()
        kind = fields[0]
        if kind == "VERTEX":
            _expect_fields(fields, 9, name, line_number)
            node_id = _parse_int(fields[1], name, line_number, 2)
            pose = _parse_pose(fields[2:], name, line_number, 3)
            try:
                graph.add_node(node_id, pose)
            except ValueError as bad:
                raise ParseError(str(bad), name, line_number) from None
        elif kind == "EDGE":
            _expect_fields(fields, 32, name, line_number)
            edge_kind = fields[1]
            a = _parse_int(fields[2], name, line_number, 3)
            b = _parse_int(fields[3], name, line_number, 4)
            measurement = _parse_pose(fields[4:11], name, line_number, 5)
            information = np.zeros((6, 6))
            column = 12
            for i in range(6):
                for j in range(i, 6):
                    value = _parse_float(fields[column - 1], name, line_number, column)
                    information[i, j] = value
                    information[j, i] = value
                    column += 1
            try:
                graph.add_edge(PoseEdge(a, b, measurement, information, edge_kind))
            except ValueError as bad:
                raise ParseError(str(bad), name, line_number) from None
        else:
            raise ParseError(
                f"expected 'VERTEX' or 'EDGE', got {kind!r}", name, line_number, 1
            )
    return graph


# ---------------------------------------------------------------- manifest


def manifest_text(config: RunConfig, inputs: dict[str, str]) -> str:
    """A manifest is a resolved config plus hash and version comments.

    ``inputs`` maps display names (relative paths) to content hashes.
    Nothing here depends on run time or absolute locations, so two runs
    over the same inputs produce the same manifest.
    """
    body = config_text(config)
    lines = [
        "# manifest",
        f"# config_sha256 = {sha256_text(body)}",
        f"# python = {sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}",
        f"# numpy = {np.__version__}",
        f"# scipy = {scipy.__version__}",
        f"# propslam = {__version__}",
    ]
    for display in sorted(inputs):
        lines.append(f"# input {display} sha256 {inputs[display]}")
    return "\n".join(lines) + "\n" + body


def write_manifest(
    config: RunConfig, inputs: dict[str, str], path: str | Path
) -> None:
    atomic_write_text(path, manifest_text(config, inputs))


def config_with_variant(config: RunConfig, variant: str) -> RunConfig:
    return replace(config, variant=variant)
