"""Rotation representations and distances on SO(3).

Conventions:
- Rotation matrices R are 3x3, act on column vectors (v' = R @ v), and are
  applied to row-stacked point arrays as P @ R.T.
- Quaternions are (w, x, y, z), scalar first, unit norm.
- All angles in radians unless a function name says degrees.

Everything here is double precision; single precision cannot reach the
recovery tolerances the pose solver is tested against.
"""

from __future__ import annotations

import numpy as np

ORTHO_TOL = 1e-12


def is_rotation(m: np.ndarray, tol: float = 1e-9) -> bool:
    """True if m is orthonormal with determinant +1 within tol."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        return False
    return (
        np.abs(m.T @ m - np.eye(3)).max() <= tol
        and abs(np.linalg.det(m) - 1.0) <= tol
    )


def check_rotation(m: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Validate and return m as a float array, raising on a bad rotation."""
    m = np.asarray(m, dtype=float)
    if not is_rotation(m, tol):
        raise ValueError("not a rotation matrix (orthonormality/det check failed)")
    return m


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (w,x,y,z) to rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=float)
    n = w * w + x * x + y * y + z * z
    if abs(n - 1.0) > 1e-9:
        raise ValueError("quaternion is not unit norm")
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w,x,y,z), w >= 0.

    Shepperd's method: branch on the largest diagonal combination to avoid
    cancellation near 180 degree rotations.
    """
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        if i == 0:
            s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            q = np.array(
                [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 - m[0, 0] + m[1, 1] - m[2, 2]) * 2
            q = np.array(
                [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
            )
        else:
            s = np.sqrt(1.0 - m[0, 0] - m[1, 1] + m[2, 2]) * 2
            q = np.array(
                [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
            )
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Draw a rotation uniformly (Haar measure) on SO(3).

    A 4D standard Gaussian normalized to the unit sphere is uniform on S^3,
    and the double cover S^3 -> SO(3) pushes that forward to Haar measure.
    """
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return quat_to_matrix(q)


def random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    """n Haar-uniform rotations, shape (n, 3, 3)."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    out = np.empty((n, 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def geodesic_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Rotation-group distance between a and b, in [0, pi].

    Mathematically arccos((trace(a^T b) - 1) / 2). Evaluated through
    2*arcsin(||a - b||_F / (2*sqrt(2))) away from pi: the arccos form loses
    half the significant digits near zero (arccos(1 - eps) ~ sqrt(2 eps)),
    which would floor the distance at ~1e-8 even for bit-identical inputs.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cos_theta = (np.trace(a.T @ b) - 1.0) / 2.0
    if cos_theta < -0.5:
        return float(np.arccos(np.clip(cos_theta, -1.0, 1.0)))
    d = np.linalg.norm(a - b)
    return float(2.0 * np.arcsin(np.clip(d / (2.0 * np.sqrt(2.0)), 0.0, 1.0)))


def geodesic_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise geodesic_angle over stacked (n,3,3) inputs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cos_theta = (np.einsum("nij,nij->n", a, b) - 1.0) / 2.0
    d = np.linalg.norm((a - b).reshape(len(a), 9), axis=1)
    small = 2.0 * np.arcsin(np.clip(d / (2.0 * np.sqrt(2.0)), 0.0, 1.0))
    large = np.arccos(np.clip(cos_theta, -1.0, 1.0))
    return np.where(cos_theta < -0.5, large, small)


def axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues formula: rotation of `angle` radians about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise ValueError("axis must be a unit vector")
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def matrix_to_axis_angle(m: np.ndarray) -> tuple[np.ndarray, float]:
    """Inverse of axis_angle via the quaternion route (stable at 0 and pi)."""
    w, x, y, z = matrix_to_quat(m)
    s = np.sqrt(x * x + y * y + z * z)
    if s < 1e-12:
        return np.array([0.0, 0.0, 1.0]), 0.0
    angle = 2.0 * np.arctan2(s, w)
    return np.array([x, y, z]) / s, float(angle)


def rot_x(angle: float) -> np.ndarray:
    return axis_angle(np.array([1.0, 0.0, 0.0]), angle)


def rot_y(angle: float) -> np.ndarray:
    return axis_angle(np.array([0.0, 1.0, 0.0]), angle)


def rot_z(angle: float) -> np.ndarray:
    return axis_angle(np.array([0.0, 0.0, 1.0]), angle)


def apply(r: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Rotate row-stacked points: each row p maps to r @ p."""
    points = np.asarray(points, dtype=float)
    return points @ np.asarray(r, dtype=float).T


def rotation_to_flat(r: np.ndarray) -> list[float]:
    """Row-major 9-tuple used in reports and dataset records."""
    return [float(v) for v in np.asarray(r, dtype=float).reshape(9)]


def rotation_from_flat(values) -> np.ndarray:
    r = np.asarray(values, dtype=float).reshape(3, 3)
    return check_rotation(r, tol=1e-6)


# Mean of the SO(3) rotation-angle density (1 - cos t)/pi over [0, pi]:
# integral of t*(1-cos t)/pi equals pi/2 + 2/pi.
MEAN_RANDOM_GEODESIC = float(np.pi / 2.0 + 2.0 / np.pi)
