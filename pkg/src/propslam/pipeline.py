"""End-to-end scan-matching pipeline in five variants.

Variants:

    odometry_only   dead-reckoned odometry, no matching
    icp             label-blind scan matching
    icp_pg          label-blind matching plus loop closure and graph
                    optimization
    prop_icp        label-aware scan matching
    prop_icp_pg     label-aware matching plus loop closure and graph
                    optimization

The label-blind variants run the same matcher with the class penalty
forced to zero and the widened search radius collapsed onto the base
radius, which reduces association to plain nearest-neighbor gating.

Sequential processing composes each frame-to-frame match onto the
previous pose, starting from the first odometry pose.  A frame whose
match fails falls back to the raw odometry increment with a deliberately
inflated covariance, and the event is recorded; the pipeline never aborts
a run over a single bad frame.  Loop closures come from property-labeled
landmark revisits, are verified by a scan match, and must pass a
covariance-trace gate before entering the pose graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .association import AssociationParams
from .cloud import PointCloud, concatenate_clouds
from .errors import (
    DegenerateGeometryError,
    InsufficientOverlapError,
    OptimizationDivergedError,
    SingularRotationError,
    UnobservableDirectionError,
)
from .geometry import RigidTransform, apply, compose, relative, rotation_angle
from .icp import IcpParams, IcpResult, run_icp
from .landmarks import LandmarkParams, extract_landmarks, detect_loops
from .posegraph import (
    OptimizeParams,
    OptimizeReport,
    PoseEdge,
    PoseGraph,
    information_from_covariance,
    optimize,
)
from .trajectory import Trajectory

VARIANTS = ("odometry_only", "icp", "icp_pg", "prop_icp", "prop_icp_pg")

_MATCH_FAILURES = (
    InsufficientOverlapError,
    UnobservableDirectionError,
    DegenerateGeometryError,
    SingularRotationError,
)


@dataclass(frozen=True)
class PipelineParams:
    """Everything a run needs beyond the scans and odometry.

    ``icp`` is the label-aware configuration; label-blind variants derive
    theirs from it via :func:`conventional_params`.  ``fallback_sigma`` is
    the per-axis standard deviation assigned to a raw odometry edge before
    the x100 inflation applied when a match fails.

    A closure candidate whose matched transform departs from its initial
    guess by more than ``loop_max_correction`` meters or
    ``loop_max_rotation`` radians is discarded as a mismatch.  The guess
    comes from the estimated chain, so a genuine revisit needs at most the
    accumulated drift as a correction; a much larger jump means the match
    locked onto different structure, which on a course with repeating
    geometry it can do with full confidence and a tiny covariance.
    """

    icp: IcpParams = IcpParams()
    landmarks: LandmarkParams = LandmarkParams()
    optimizer: OptimizeParams = OptimizeParams()
    loop_max_cov_trace: float = 0.5
    loop_max_correction: float = 0.8
    loop_max_rotation: float = 0.09
    loop_suppression_window: int = 5
    fallback_sigma: float = 0.01
    match_range_limit: float | None = None

    def __post_init__(self):
        if self.loop_max_cov_trace <= 0.0:
            raise ValueError("loop_max_cov_trace must be positive")
        if self.loop_max_correction <= 0.0:
            raise ValueError("loop_max_correction must be positive")
        if self.loop_max_rotation <= 0.0:
            raise ValueError("loop_max_rotation must be positive")
        if self.loop_suppression_window < 1:
            raise ValueError("loop_suppression_window must be at least 1")
        if self.fallback_sigma <= 0.0:
            raise ValueError("fallback_sigma must be positive")
        if self.match_range_limit is not None and self.match_range_limit <= 0.0:
            raise ValueError("match_range_limit must be positive when set")


def conventional_params(icp: IcpParams) -> IcpParams:
    """Label-blind twin of a configuration: zero penalty, no widening."""
    assoc = icp.association
    return replace(
        icp,
        association=AssociationParams(
            base_radius=assoc.base_radius,
            widened_radius=assoc.base_radius,
            penalty=0.0,
            tie_break=assoc.tie_break,
        ),
    )


@dataclass(frozen=True)
class PipelineEvent:
    """One notable occurrence during a run, in processing order."""

    kind: str
    frame_a: int
    frame_b: int
    detail: str


@dataclass(frozen=True)
class LoopClosure:
    frame_a: int
    frame_b: int
    measurement: RigidTransform
    covariance: np.ndarray


@dataclass
class PipelineResult:
    variant: str
    trajectory: Trajectory
    world_map: PointCloud
    icp_results: list[IcpResult | None]
    sequential: Trajectory
    edges: list[tuple[int, int, RigidTransform, np.ndarray]] = field(
        default_factory=list
    )
    loops: list[LoopClosure] = field(default_factory=list)
    events: list[PipelineEvent] = field(default_factory=list)
    optimize_report: OptimizeReport | None = None

    def graph(self) -> PoseGraph:
        """Nodes at the final trajectory, all sequential and loop edges."""
        graph = PoseGraph()
        for frame_id, pose in self.trajectory:
            graph.add_node(frame_id, pose)
        for a, b, measurement, covariance in self.edges:
            graph.add_edge(
                PoseEdge(
                    a, b, measurement, information_from_covariance(covariance), "odometry"
                )
            )
        for loop in self.loops:
            graph.add_edge(
                PoseEdge(
                    loop.frame_a,
                    loop.frame_b,
                    loop.measurement,
                    information_from_covariance(loop.covariance),
                    "loop",
                )
            )
        return graph


def assemble_map(
    scans: list[PointCloud], trajectory: Trajectory
) -> PointCloud:
    """Union of scans placed at their trajectory poses, labels kept."""
    placed = []
    for scan in scans:
        pose = trajectory.pose_of(scan.frame_id)
        placed.append(
            PointCloud(
                positions=apply(pose, scan.positions),
                labels=scan.labels,
                frame_id=scan.frame_id,
            )
        )
    return concatenate_clouds(placed, frame_id=trajectory.frame_ids[0])


def _fallback_covariance(sigma: float) -> np.ndarray:
    return np.eye(6) * (sigma * sigma * 100.0)


def _range_masked(scan: PointCloud, limit: float | None) -> PointCloud:
    """Drop source points near the sensor's range cutoff before matching.

    A scan ends abruptly at the maximum range, so the band of points just
    inside the cutoff covers surface the other scan may not, and matching
    those points drags the estimate toward the overlap instead of the
    truth.  Points are ranged in the scan's own sensor frame.
    """
    if limit is None:
        return scan
    ranges_sq = np.einsum("ij,ij->i", scan.positions, scan.positions)
    keep = ranges_sq <= limit * limit
    if keep.all():
        return scan
    return PointCloud(
        positions=scan.positions[keep],
        labels=scan.labels[keep],
        frame_id=scan.frame_id,
    )


def _sequential_chain(
    scans: list[PointCloud],
    odometry: Trajectory,
    params: PipelineParams,
    icp_params: IcpParams,
    events: list[PipelineEvent],
) -> tuple[list[RigidTransform], list[tuple[int, int, RigidTransform, np.ndarray]], list[IcpResult | None]]:
    poses = [odometry.poses[0]]
    edges = []
    icp_results: list[IcpResult | None] = []
    for i in range(1, len(scans)):
        frame_prev = odometry.frame_ids[i - 1]
        frame_curr = odometry.frame_ids[i]
        init = relative(odometry.poses[i - 1], odometry.poses[i])
        try:
            source = _range_masked(scans[i], params.match_range_limit)
            result = run_icp(source, scans[i - 1], init, icp_params)
            rel, covariance = result.transform, result.covariance
            icp_results.append(result)
        except _MATCH_FAILURES as failure:
            rel = init
            covariance = _fallback_covariance(params.fallback_sigma)
            icp_results.append(None)
            events.append(
                PipelineEvent(
                    kind="icp_fallback",
                    frame_a=frame_prev,
                    frame_b=frame_curr,
                    detail=str(failure),
                )
            )
        poses.append(compose(poses[-1], rel))
        edges.append((frame_prev, frame_curr, rel, covariance))
    return poses, edges, icp_results


def _select_loops(
    candidates, window: int
) -> list:
    """Best-gap-first acceptance with duplicate suppression.

    A candidate whose both endpoints fall within ``window`` frames of an
    already accepted closure describes the same revisit and is dropped.
    """
    accepted = []
    ordered = sorted(
        candidates, key=lambda c: (c.centroid_gap, c.frame_a, c.frame_b)
    )
    for candidate in ordered:
        duplicate = any(
            abs(candidate.frame_a - done.frame_a) < window
            and abs(candidate.frame_b - done.frame_b) < window
            for done in accepted
        )
        if not duplicate:
            accepted.append(candidate)
    return sorted(accepted, key=lambda c: (c.frame_a, c.frame_b))


def _close_loops(
    scans: list[PointCloud],
    sequential: Trajectory,
    params: PipelineParams,
    icp_params: IcpParams,
    events: list[PipelineEvent],
) -> list[LoopClosure]:
    by_frame = {scan.frame_id: scan for scan in scans}
    landmarks = [
        landmark
        for scan in scans
        for landmark in extract_landmarks(scan, params.landmarks)
    ]
    candidates = detect_loops(landmarks, sequential, params.landmarks)
    loops = []
    for candidate in _select_loops(candidates, params.loop_suppression_window):
        a, b = candidate.frame_a, candidate.frame_b
        init = relative(sequential.pose_of(a), sequential.pose_of(b))
        try:
            source = _range_masked(by_frame[b], params.match_range_limit)
            result = run_icp(source, by_frame[a], init, icp_params)
        except _MATCH_FAILURES as failure:
            events.append(
                PipelineEvent("loop_rejected", a, b, detail=str(failure))
            )
            continue
        trace = float(np.trace(result.covariance))
        correction = relative(init, result.transform)
        shift = float(np.linalg.norm(correction.translation))
        swing = rotation_angle(correction.rotation)
        if not result.converged:
            events.append(
                PipelineEvent("loop_rejected", a, b, detail="match did not converge")
            )
        elif trace > params.loop_max_cov_trace:
            events.append(
                PipelineEvent(
                    "loop_rejected",
                    a,
                    b,
                    detail=f"covariance trace {trace:.6g} above gate",
                )
            )
        elif shift > params.loop_max_correction or swing > params.loop_max_rotation:
            events.append(
                PipelineEvent(
                    "loop_rejected",
                    a,
                    b,
                    detail=(
                        f"correction {shift:.3f} m / {swing:.4f} rad "
                        "beyond the trust gate"
                    ),
                )
            )
        else:
            loops.append(
                LoopClosure(
                    frame_a=a,
                    frame_b=b,
                    measurement=result.transform,
                    covariance=result.covariance,
                )
            )
            events.append(
                PipelineEvent(
                    "loop_accepted",
                    a,
                    b,
                    detail=f"covariance trace {trace:.6g}",
                )
            )
    return loops


def _optimize_graph(
    sequential: Trajectory,
    edges: list[tuple[int, int, RigidTransform, np.ndarray]],
    loops: list[LoopClosure],
    params: PipelineParams,
    events: list[PipelineEvent],
) -> tuple[Trajectory, OptimizeReport | None]:
    graph = PoseGraph()
    for frame_id, pose in sequential:
        graph.add_node(frame_id, pose)
    for a, b, measurement, covariance in edges:
        graph.add_edge(
            PoseEdge(a, b, measurement, information_from_covariance(covariance), "odometry")
        )
    for loop in loops:
        graph.add_edge(
            PoseEdge(
                loop.frame_a,
                loop.frame_b,
                loop.measurement,
                information_from_covariance(loop.covariance),
                "loop",
            )
        )
    try:
        optimized, report = optimize(graph, params.optimizer)
    except OptimizationDivergedError as failure:
        events.append(
            PipelineEvent(
                "optimizer_diverged",
                sequential.frame_ids[0],
                sequential.frame_ids[-1],
                detail=str(failure),
            )
        )
        return sequential, failure.report
    for warning in report.warnings:
        events.append(
            PipelineEvent(
                "optimizer_warning",
                sequential.frame_ids[0],
                sequential.frame_ids[-1],
                detail=warning,
            )
        )
    poses = tuple(optimized.nodes[frame_id] for frame_id in sequential.frame_ids)
    return Trajectory(frame_ids=sequential.frame_ids, poses=poses), report


def run_pipeline(
    scans: list[PointCloud],
    odometry: Trajectory,
    variant: str,
    params: PipelineParams = PipelineParams(),
) -> PipelineResult:
    """Estimate a trajectory and map from scans plus odometry.

    ``scans`` and ``odometry`` must cover the same frames in the same
    order.  The estimate starts at the first odometry pose for every
    variant, so trajectories are directly comparable.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if len(scans) != len(odometry):
        raise ValueError(
            f"{len(scans)} scans but {len(odometry)} odometry poses"
        )
    for scan, frame_id in zip(scans, odometry.frame_ids):
        if scan.frame_id != frame_id:
            raise ValueError(
                f"scan frame {scan.frame_id} does not match odometry frame {frame_id}"
            )
    if len(scans) == 0:
        raise ValueError("cannot run on an empty sequence")

    events: list[PipelineEvent] = []
    if variant == "odometry_only":
        world_map = assemble_map(scans, odometry)
        return PipelineResult(
            variant=variant,
            trajectory=odometry,
            world_map=world_map,
            icp_results=[None] * (len(scans) - 1),
            sequential=odometry,
            events=events,
        )

    icp_params = params.icp if variant.startswith("prop") else conventional_params(params.icp)
    poses, edges, icp_results = _sequential_chain(
        scans, odometry, params, icp_params, events
    )
    sequential = Trajectory(frame_ids=odometry.frame_ids, poses=tuple(poses))

    trajectory = sequential
    loops: list[LoopClosure] = []
    report = None
    if variant.endswith("_pg"):
        loops = _close_loops(scans, sequential, params, icp_params, events)
        trajectory, report = _optimize_graph(
            sequential, edges, loops, params, events
        )

    world_map = assemble_map(scans, trajectory)
    return PipelineResult(
        variant=variant,
        trajectory=trajectory,
        world_map=world_map,
        icp_results=icp_results,
        sequential=sequential,
        edges=edges,
        loops=loops,
        events=events,
        optimize_report=report,
    )
