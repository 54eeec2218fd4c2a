"""Pose graph on SE(3) with damped Gauss-Newton optimization.

Nodes hold absolute poses; an edge (a, b) measures the pose of node b in
the frame of node a.  The edge error is the twist of the discrepancy,

    e = twist_log( inverse(measurement) . relative(pose_a, pose_b) )

and the objective is the sum of ``e^T Lambda e`` over edges, with Lambda
the edge's 6x6 information matrix.  Optimization updates each free node by
a right-multiplied twist increment, ``pose <- pose . twist_exp(delta)``;
the node with the smallest id stays fixed to pin the gauge freedom.

Damping is Levenberg-style on the scaled diagonal (``H + mu diag(H)``),
which makes the iterates invariant to scaling all information matrices by
a common constant.  Rejected steps double ``mu``; accepted steps halve it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from .errors import DanglingEdgeError, OptimizationDivergedError
from .geometry import (
    RigidTransform,
    adjoint,
    compose,
    inverse,
    relative,
    se3_right_jacobian_inverse,
    twist_exp,
    twist_log,
)

_INFORMATION_SYMMETRY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class PoseEdge:
    """Relative pose constraint between nodes ``a`` and ``b``.

    ``kind`` is "odometry" for consecutive-frame constraints and "loop"
    otherwise; it is bookkeeping only and does not change the math.
    """

    a: int
    b: int
    measurement: RigidTransform
    information: np.ndarray
    kind: str = "odometry"

    def __post_init__(self):
        information = np.array(self.information, dtype=np.float64)
        if information.shape != (6, 6):
            raise ValueError(f"information must be 6x6, got {information.shape}")
        asymmetry = float(np.abs(information - information.T).max())
        scale = max(float(np.abs(information).max()), 1.0)
        if asymmetry > _INFORMATION_SYMMETRY_TOLERANCE * scale:
            raise ValueError("information matrix must be symmetric")
        information = 0.5 * (information + information.T)
        if np.linalg.eigvalsh(information)[0] <= 0.0:
            raise ValueError("information matrix must be positive definite")
        if self.a == self.b:
            raise ValueError("edge endpoints must differ")
        if self.kind not in ("odometry", "loop"):
            raise ValueError(f"unknown edge kind {self.kind!r}")
        information.setflags(write=False)
        object.__setattr__(self, "information", information)


@dataclass
class PoseGraph:
    """Node poses keyed by id, plus relative-pose edges."""

    nodes: dict[int, RigidTransform] = field(default_factory=dict)
    edges: list[PoseEdge] = field(default_factory=list)

    def add_node(self, node_id: int, pose: RigidTransform) -> None:
        if node_id in self.nodes:
            raise ValueError(f"duplicate node id {node_id}")
        self.nodes[node_id] = pose

    def add_edge(self, edge: PoseEdge) -> None:
        self.edges.append(edge)

    def _endpoints(self, edge: PoseEdge) -> tuple[RigidTransform, RigidTransform]:
        try:
            return self.nodes[edge.a], self.nodes[edge.b]
        except KeyError as missing:
            raise DanglingEdgeError(
                f"edge ({edge.a}, {edge.b}) references missing node {missing}"
            ) from None


def edge_error(
    edge: PoseEdge, pose_a: RigidTransform, pose_b: RigidTransform
) -> np.ndarray:
    """Twist discrepancy between the measured and current relative pose."""
    return twist_log(compose(inverse(edge.measurement), relative(pose_a, pose_b)))


def edge_jacobians(
    edge: PoseEdge, pose_a: RigidTransform, pose_b: RigidTransform
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Error and its derivatives w.r.t. right-increments of both endpoints.

    With ``rel = relative(pose_a, pose_b)`` and ``e`` the edge error,

        d e / d delta_b =  Jr^-1(e)
        d e / d delta_a = -Jr^-1(e) @ adjoint(inverse(rel))

    where ``Jr^-1`` is the inverse right Jacobian of SE(3).
    """
    rel = relative(pose_a, pose_b)
    error = twist_log(compose(inverse(edge.measurement), rel))
    jr_inv = se3_right_jacobian_inverse(error)
    jacobian_b = jr_inv
    jacobian_a = -jr_inv @ adjoint(inverse(rel))
    return error, jacobian_a, jacobian_b


def evaluate_residual(graph: PoseGraph) -> float:
    """Total objective: sum of ``e^T Lambda e`` over all edges."""
    total = 0.0
    for edge in graph.edges:
        pose_a, pose_b = graph._endpoints(edge)
        error = edge_error(edge, pose_a, pose_b)
        total += float(error @ edge.information @ error)
    return total


@dataclass(frozen=True)
class OptimizeParams:
    max_iterations: int = 50
    damping_init: float = 1e-6
    damping_ceiling: float = 1e12
    residual_rel_tol: float = 1e-9
    step_tol: float = 1e-10


@dataclass
class OptimizeReport:
    initial_residual: float
    final_residual: float
    iterations: int
    converged: bool
    accepted_steps: int = 0
    rejected_steps: int = 0
    residual_history: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _connected_to(graph: PoseGraph, start: int) -> set[int]:
    neighbors: dict[int, set[int]] = {node: set() for node in graph.nodes}
    for edge in graph.edges:
        if edge.a in neighbors and edge.b in neighbors:
            neighbors[edge.a].add(edge.b)
            neighbors[edge.b].add(edge.a)
    seen = {start}
    stack = [start]
    while stack:
        for other in neighbors[stack.pop()]:
            if other not in seen:
                seen.add(other)
                stack.append(other)
    return seen


def optimize(
    graph: PoseGraph, params: OptimizeParams = OptimizeParams()
) -> tuple[PoseGraph, OptimizeReport]:
    """Damped Gauss-Newton over twist increments; gauge fixed at the lowest id.

    Returns a new graph (same edges, updated poses) and a report.  The
    objective is non-increasing across accepted steps.  A graph whose nodes
    are not all connected to the gauge node is returned unchanged with a
    warning, since the disconnected part would be unconstrained.  If no
    acceptable step exists before the damping ceiling,
    :class:`OptimizationDivergedError` is raised with the partial report.
    """
    if not graph.nodes:
        report = OptimizeReport(0.0, 0.0, 0, True)
        report.warnings.append("graph has no nodes; nothing to optimize")
        return PoseGraph(dict(graph.nodes), list(graph.edges)), report
    for edge in graph.edges:
        graph._endpoints(edge)

    node_ids = sorted(graph.nodes)
    gauge = node_ids[0]
    residual = evaluate_residual(graph)
    report = OptimizeReport(
        initial_residual=residual,
        final_residual=residual,
        iterations=0,
        converged=False,
        residual_history=[residual],
    )
    if not graph.edges or _connected_to(graph, gauge) != set(node_ids):
        report.warnings.append(
            "graph is disconnected or has no edges; poses left unchanged"
        )
        report.converged = not graph.edges
        return PoseGraph(dict(graph.nodes), list(graph.edges)), report

    free_ids = node_ids[1:]
    offset = {node_id: 6 * i for i, node_id in enumerate(free_ids)}
    dims = 6 * len(free_ids)
    poses = dict(graph.nodes)
    damping = params.damping_init

    for iteration in range(1, params.max_iterations + 1):
        report.iterations = iteration
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        gradient = np.zeros(dims)
        block_idx = np.arange(6)
        for edge in graph.edges:
            pose_a, pose_b = poses[edge.a], poses[edge.b]
            error, jac_a, jac_b = edge_jacobians(edge, pose_a, pose_b)
            weighted = edge.information @ error
            for node_id, jac in ((edge.a, jac_a), (edge.b, jac_b)):
                if node_id == gauge:
                    continue
                o = offset[node_id]
                gradient[o : o + 6] += jac.T @ weighted
                for other_id, other_jac in ((edge.a, jac_a), (edge.b, jac_b)):
                    if other_id == gauge:
                        continue
                    oo = offset[other_id]
                    block = jac.T @ edge.information @ other_jac
                    r, c = np.meshgrid(block_idx + o, block_idx + oo, indexing="ij")
                    rows.append(r.ravel())
                    cols.append(c.ravel())
                    vals.append(block.ravel())
        hessian = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dims, dims),
        ).tocsc()
        diagonal = hessian.diagonal()

        accepted = False
        step = None
        while damping <= params.damping_ceiling:
            damped = hessian + sparse.diags(damping * diagonal)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    step = sparse_linalg.spsolve(damped, -gradient)
                except RuntimeError:
                    step = None
            if step is not None and np.isfinite(step).all():
                candidate = dict(poses)
                for node_id in free_ids:
                    o = offset[node_id]
                    candidate[node_id] = compose(
                        poses[node_id], twist_exp(step[o : o + 6])
                    )
                new_residual = evaluate_residual(
                    PoseGraph(candidate, list(graph.edges))
                )
                if np.isfinite(new_residual) and new_residual <= residual:
                    poses = candidate
                    accepted = True
                    report.accepted_steps += 1
                    damping = max(damping * 0.5, 1e-15)
                    break
            report.rejected_steps += 1
            damping *= 2.0
        if not accepted:
            report.final_residual = residual
            raise OptimizationDivergedError(
                "no acceptable step before the damping ceiling; normal matrix "
                "is not positive definite or the objective cannot decrease",
                report=report,
            )

        previous, residual = residual, new_residual
        report.residual_history.append(residual)
        report.final_residual = residual
        relative_drop = (previous - residual) / max(previous, 1e-300)
        if relative_drop < params.residual_rel_tol or (
            float(np.linalg.norm(step)) < params.step_tol
        ):
            report.converged = True
            break

    return PoseGraph(poses, list(graph.edges)), report


def information_from_covariance(covariance: np.ndarray) -> np.ndarray:
    """Symmetrized inverse of a 6x6 covariance."""
    info = np.linalg.inv(np.asarray(covariance, dtype=np.float64))
    return 0.5 * (info + info.T)


def build_graph(
    poses: list[RigidTransform],
    sequential: list[tuple[int, int, RigidTransform, np.ndarray]],
    loops: list[tuple[int, int, RigidTransform, np.ndarray]] = (),
) -> PoseGraph:
    """Assemble nodes 0..n-1 plus odometry and loop edges.

    ``sequential`` and ``loops`` rows are ``(a, b, measurement, covariance)``
    with the measurement the pose of b in the frame of a; covariances are
    inverted into information matrices here.
    """
    graph = PoseGraph()
    for node_id, pose in enumerate(poses):
        graph.add_node(node_id, pose)
    for a, b, measurement, covariance in sequential:
        graph.add_edge(
            PoseEdge(a, b, measurement, information_from_covariance(covariance), "odometry")
        )
    for a, b, measurement, covariance in loops:
        graph.add_edge(
            PoseEdge(a, b, measurement, information_from_covariance(covariance), "loop")
        )
    return graph
