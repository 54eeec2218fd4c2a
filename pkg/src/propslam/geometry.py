"""Rigid-body geometry: rotations, SE(3) transforms, and twist coordinates.

Conventions used throughout the package:

* A :class:`RigidTransform` stores a 3x3 rotation matrix and a 3-vector
  translation and maps a point ``p`` to ``rotation @ p + translation``.
* ``compose(a, b)`` is the transform that applies ``b`` first, then ``a``.
* Twist coordinates are 6-vectors ``(vx, vy, vz, wx, wy, wz)`` with the
  translation part first and the rotation part second.
* ``twist_exp`` / ``twist_log`` are the SE(3) exponential map and its
  inverse.  The log is defined for rotation angles strictly below pi;
  a rotation at the parameterization singularity raises
  :class:`~propslam.errors.SingularRotationError`.

Everything here is float64 numpy.  Trigonometric coefficient functions
switch to Taylor expansions below :data:`SMALL_ANGLE` so that round trips
hold to 1e-9 for any angle in the supported range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularRotationError

# Angle (radians) below which series expansions replace closed forms.
SMALL_ANGLE = 0.1
# twist_log / so3_log refuse angles within this margin of pi.
LOG_SINGULARITY_MARGIN = 1e-7
# Rotation angle above which the log switches to the symmetric-part branch.
NEAR_PI_ANGLE = np.pi - 1e-4
# Constructor rejects rotation matrices with a larger orthonormality defect.
ORTHONORMALITY_TOLERANCE = 1e-9
# compose() re-orthonormalizes its product beyond this defect.
RENORMALIZE_THRESHOLD = 1e-12


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ u == np.cross(v, u)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _orthonormality_defect(rotation: np.ndarray) -> float:
    gram = rotation.T @ rotation
    return max(
        float(np.abs(gram - np.eye(3)).max()),
        abs(float(np.linalg.det(rotation)) - 1.0),
    )


def orthonormalize(rotation: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (polar decomposition)."""
    u, _, vt = np.linalg.svd(rotation)
    fixed = u @ vt
    if np.linalg.det(fixed) < 0.0:
        fixed = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return fixed


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation + translation, mapping ``p`` to ``rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64)
        translation = np.array(self.translation, dtype=np.float64)
        if rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rotation.shape}")
        if translation.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {translation.shape}")
        if not (np.isfinite(rotation).all() and np.isfinite(translation).all()):
            raise ValueError("transform entries must be finite")
        defect = _orthonormality_defect(rotation)
        if defect > ORTHONORMALITY_TOLERANCE:
            raise ValueError(
                f"rotation matrix is not orthonormal (defect {defect:.3e})"
            )
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform equivalent to applying ``b`` first and ``a`` second."""
    rotation = a.rotation @ b.rotation
    if _orthonormality_defect(rotation) > RENORMALIZE_THRESHOLD:
        rotation = orthonormalize(rotation)
    return RigidTransform(rotation, a.rotation @ b.translation + a.translation)


def inverse(x: RigidTransform) -> RigidTransform:
    return RigidTransform(x.rotation.T, -(x.rotation.T @ x.translation))


def relative(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Pose of ``b`` expressed in the frame of ``a``: ``inverse(a) . b``."""
    return compose(inverse(a), b)


def apply(x: RigidTransform, points: np.ndarray) -> np.ndarray:
    """Map one point (3,) or a stack of points (N, 3) through ``x``."""
    points = np.asarray(points, dtype=np.float64)
    return points @ x.rotation.T + x.translation


def rotation_angle(rotation: np.ndarray) -> float:
    """Rotation angle in [0, pi]."""
    sym = np.array([
        rotation[2, 1] - rotation[1, 2],
        rotation[0, 2] - rotation[2, 0],
        rotation[1, 0] - rotation[0, 1],
    ])
    sine = 0.5 * float(np.linalg.norm(sym))
    cosine = 0.5 * (float(np.trace(rotation)) - 1.0)
    return float(np.arctan2(sine, cosine))


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues formula: rotation matrix for a rotation vector."""
    theta = float(np.linalg.norm(omega))
    cross = skew(omega)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0 - t2 * t2 * t2 / 5040.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2 * t2 * t2 / 40320.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * cross + b * (cross @ cross)


def so3_log(rotation: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix.

    Raises :class:`SingularRotationError` when the angle falls within
    :data:`LOG_SINGULARITY_MARGIN` of pi, where the axis sign is undefined.
    """
    sym = np.array([
        rotation[2, 1] - rotation[1, 2],
        rotation[0, 2] - rotation[2, 0],
        rotation[1, 0] - rotation[0, 1],
    ])
    sine = 0.5 * float(np.linalg.norm(sym))
    cosine = 0.5 * (float(np.trace(rotation)) - 1.0)
    theta = float(np.arctan2(sine, cosine))
    if theta > np.pi - LOG_SINGULARITY_MARGIN:
        raise SingularRotationError(
            f"rotation angle {theta:.12f} rad is at the parameterization "
            "singularity; the rotation vector is not unique"
        )
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        scale = 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
        return 0.5 * scale * sym
    if theta < NEAR_PI_ANGLE:
        return (0.5 * theta / np.sin(theta)) * sym
    # Close to pi the antisymmetric part vanishes; recover the axis from the
    # symmetric part and take its sign from what remains of ``sym``.
    outer = ((rotation + rotation.T) * 0.5 - cosine * np.eye(3)) / (1.0 - cosine)
    axis_idx = int(np.argmax(np.diag(outer)))
    axis = outer[axis_idx] / np.sqrt(max(outer[axis_idx, axis_idx], 1e-30))
    axis = axis / np.linalg.norm(axis)
    if float(axis @ sym) < 0.0:
        axis = -axis
    return theta * axis


def so3_left_jacobian(omega: np.ndarray) -> np.ndarray:
    """Left Jacobian of SO(3); maps so(3) velocities to translation effects."""
    theta = float(np.linalg.norm(omega))
    cross = skew(omega)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2 * t2 * t2 / 40320.0
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0
    else:
        b = (1.0 - np.cos(theta)) / (theta * theta)
        c = (theta - np.sin(theta)) / (theta ** 3)
    return np.eye(3) + b * cross + c * (cross @ cross)


def so3_left_jacobian_inverse(omega: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(omega))
    cross = skew(omega)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0
    else:
        half = 0.5 * theta
        d = (1.0 - half * np.cos(half) / np.sin(half)) / (theta * theta)
    return np.eye(3) - 0.5 * cross + d * (cross @ cross)


def twist_exp(twist: np.ndarray) -> RigidTransform:
    """SE(3) exponential of ``(vx, vy, vz, wx, wy, wz)``."""
    twist = np.asarray(twist, dtype=np.float64)
    if twist.shape != (6,):
        raise ValueError(f"twist must be a 6-vector, got {twist.shape}")
    v, omega = twist[:3], twist[3:]
    return RigidTransform(so3_exp(omega), so3_left_jacobian(omega) @ v)


def twist_log(x: RigidTransform) -> np.ndarray:
    """Inverse of :func:`twist_exp`; rotation angle must be below pi."""
    omega = so3_log(x.rotation)
    v = so3_left_jacobian_inverse(omega) @ x.translation
    return np.concatenate([v, omega])


def adjoint(x: RigidTransform) -> np.ndarray:
    """6x6 adjoint: ``twist_exp(adjoint(x) @ xi) == x . twist_exp(xi) . x^-1``."""
    out = np.zeros((6, 6))
    out[:3, :3] = x.rotation
    out[:3, 3:] = skew(x.translation) @ x.rotation
    out[3:, 3:] = x.rotation
    return out


def _se3_q_matrix(rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Translation-rotation coupling block of the SE(3) left Jacobian."""
    theta = float(np.linalg.norm(phi))
    rx = skew(rho)
    px = skew(phi)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0
        c3 = -1.0 / 120.0 + t2 / 5040.0 - t2 * t2 / 362880.0
    else:
        s, c = np.sin(theta), np.cos(theta)
        c1 = (theta - s) / theta ** 3
        c2 = (1.0 - 0.5 * theta * theta - c) / theta ** 4
        c3 = (theta - s - theta ** 3 / 6.0) / theta ** 5
    pr = px @ rx
    rp = rx @ px
    prp = pr @ px
    return (
        0.5 * rx
        + c1 * (pr + rp + px @ rp)
        - c2 * (px @ pr + rp @ px - 3.0 * prp)
        - 0.5 * (c2 - 3.0 * c3) * (prp @ px + px @ prp)
    )


def se3_left_jacobian_inverse(twist: np.ndarray) -> np.ndarray:
    """Inverse left Jacobian of SE(3) for twist order ``(v, w)``."""
    twist = np.asarray(twist, dtype=np.float64)
    rho, phi = twist[:3], twist[3:]
    jl_inv = so3_left_jacobian_inverse(phi)
    q = _se3_q_matrix(rho, phi)
    out = np.zeros((6, 6))
    out[:3, :3] = jl_inv
    out[:3, 3:] = -jl_inv @ q @ jl_inv
    out[3:, 3:] = jl_inv
    return out


def se3_right_jacobian_inverse(twist: np.ndarray) -> np.ndarray:
    """Inverse right Jacobian: ``log(exp(xi) exp(d)) ~ xi + Jr^-1(xi) d``."""
    return se3_left_jacobian_inverse(-np.asarray(twist, dtype=np.float64))


def rotation_to_quaternion(rotation: np.ndarray) -> np.ndarray:
    """Unit quaternion ``(qx, qy, qz, qw)`` with the sign fixed so qw >= 0."""
    m = rotation
    tr = float(np.trace(m))
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([
            (m[2, 1] - m[1, 2]) / s,
            (m[0, 2] - m[2, 0]) / s,
            (m[1, 0] - m[0, 1]) / s,
            0.25 * s,
        ])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([
            0.25 * s,
            (m[0, 1] + m[1, 0]) / s,
            (m[0, 2] + m[2, 0]) / s,
            (m[2, 1] - m[1, 2]) / s,
        ])
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([
            (m[0, 1] + m[1, 0]) / s,
            0.25 * s,
            (m[1, 2] + m[2, 1]) / s,
            (m[0, 2] - m[2, 0]) / s,
        ])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([
            (m[0, 2] + m[2, 0]) / s,
            (m[1, 2] + m[2, 1]) / s,
            0.25 * s,
            (m[1, 0] - m[0, 1]) / s,
        ])
    q = q / np.linalg.norm(q)
    if q[3] < 0.0 or (q[3] == 0.0 and _first_nonzero_sign(q[:3]) < 0.0):
        q = -q
    return q


def _first_nonzero_sign(values: np.ndarray) -> float:
    for value in values:
        if value != 0.0:
            return float(np.sign(value))
    return 1.0


def quaternion_to_rotation(quaternion: np.ndarray) -> np.ndarray:
    """Rotation matrix of a quaternion ``(qx, qy, qz, qw)`` (normalized here)."""
    q = np.asarray(quaternion, dtype=np.float64)
    q = q / np.linalg.norm(q)
    x, y, z, w = q
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ])
