"""Rotation representations: axis-angle, rotation matrices, and 6D vectors.

Conventions used throughout the package:
  * axis-angle vectors are length-3, direction = rotation axis, norm = angle
    in radians; the zero vector is the identity rotation.
  * rotation matrices act on column vectors (points are row-stacked, so
    posed points are ``points @ R.T``).
  * the 6D representation stores the first two *columns* of the rotation
    matrix, flattened column-by-column.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def rodrigues(axis_angle) -> np.ndarray:
    """Exponential map: axis-angle (3,) -> rotation matrix (3, 3)."""
    v = np.asarray(axis_angle, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError("axis-angle must be finite")
    angle = np.linalg.norm(v)
    if angle < _EPS:
        # second-order series keeps the zero limit smooth
        K = _skew(v)
        return np.eye(3) + K + 0.5 * (K @ K)
    axis = v / angle
    K = _skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotmat_to_axis_angle(R) -> np.ndarray:
    """Logarithm map: rotation matrix (3, 3) -> axis-angle with norm <= pi."""
    R = np.asarray(R, dtype=np.float64).reshape(3, 3)
    cos_angle = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    if angle < 1e-8:
        # near identity: skew part is angle * axis to first order
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if angle > np.pi - 1e-6:
        # near pi the skew part vanishes; recover axis from the symmetric part
        A = (R + np.eye(3)) / 2.0  # = axis axis^T at angle == pi
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        k = int(np.argmax(axis))
        if axis[k] > _EPS:
            axis = A[:, k] / axis[k]
        norm = np.linalg.norm(axis)
        if norm < _EPS:
            raise ValueError("cannot recover rotation axis")
        axis = axis / norm
        # fix the sign using the (possibly tiny) skew part
        w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if np.dot(w, axis) < 0.0:
            axis = -axis
        return axis * angle
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w / (2.0 * np.sin(angle)) * angle


def canonicalize_axis_angle(axis_angle) -> np.ndarray:
    """Wrap an axis-angle vector so its norm lies in [0, pi]."""
    v = np.asarray(axis_angle, dtype=np.float64).reshape(3)
    angle = np.linalg.norm(v)
    if angle <= np.pi or angle < _EPS:
        return v.copy()
    axis = v / angle
    wrapped = np.fmod(angle, 2.0 * np.pi)
    if wrapped > np.pi:
        wrapped -= 2.0 * np.pi  # same rotation, axis flipped via the sign
    return axis * wrapped


def rotmat_to_rot6d(R) -> np.ndarray:
    """First two columns of R, flattened to (6,)."""
    R = np.asarray(R, dtype=np.float64).reshape(3, 3)
    return R[:, :2].T.reshape(6).copy()


def rot6d_to_rotmat(v) -> np.ndarray:
    """Gram-Schmidt two 3-vectors into an orthonormal frame (det +1).

    Raises ValueError when the two column vectors are (near-)parallel, which
    makes the representation unrecoverable.
    """
    v = np.asarray(v, dtype=np.float64).reshape(6)
    a1, a2 = v[:3], v[3:]
    n1 = np.linalg.norm(a1)
    if n1 < 1e-9:
        raise ValueError("degenerate 6D rotation: first column is zero")
    b1 = a1 / n1
    a2_orth = a2 - np.dot(b1, a2) * b1
    n2 = np.linalg.norm(a2_orth)
    if n2 < 1e-9:
        raise ValueError("degenerate 6D rotation: columns are parallel")
    b2 = a2_orth / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def rot_z(angle: float) -> np.ndarray:
    """Rotation about the optical (z) axis by ``angle`` radians."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )
