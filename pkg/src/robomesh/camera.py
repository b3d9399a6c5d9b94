"""Weak-perspective camera, crop-coordinate algebra, and keypoint boxes.

Coordinate frames:
  * model space: meters, camera looks along +z, smaller z is nearer.
  * crop space: the model-input frame, x and y in [-1, 1]; x grows right,
    y grows downward (image convention); (-1, -1) is the top-left corner.
  * pixel space: (x, y) with the pixel (row i, column j) centered at
    (j + 0.5, i + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rotations import canonicalize_axis_angle, rodrigues, rotmat_to_axis_angle, rot_z


@dataclass
class Camera:
    """Weak-perspective camera: p = s * (X, Y) + t in crop coordinates."""

    s: float
    t: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self) -> None:
        self.s = float(self.s)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(2)
        if not (np.isfinite(self.s) and self.s > 0):
            raise ValueError(f"camera scale must be positive and finite, got {self.s}")
        if not np.all(np.isfinite(self.t)):
            raise ValueError("camera translation must be finite")

    def copy(self) -> "Camera":
        return Camera(self.s, self.t.copy())


@dataclass
class Bbox:
    """Axis-aligned box in pixels, stored as center and size."""

    center: np.ndarray
    width: float
    height: float

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=np.float64).reshape(2)
        self.width = float(self.width)
        self.height = float(self.height)
        if not (self.width > 0 and self.height > 0):
            raise ValueError("bbox width and height must be positive")

    @property
    def x_range(self) -> tuple[float, float]:
        return self.center[0] - self.width / 2, self.center[0] + self.width / 2

    @property
    def y_range(self) -> tuple[float, float]:
        return self.center[1] - self.height / 2, self.center[1] + self.height / 2


@dataclass
class AffineMap:
    """2D affine p' = A @ p + b acting on crop coordinates."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A, dtype=np.float64).reshape(2, 2)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(2)
        if abs(np.linalg.det(self.A)) < 1e-12:
            raise ValueError("affine map must be invertible")

    @classmethod
    def identity(cls) -> "AffineMap":
        return cls(np.eye(2), np.zeros(2))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.A.T + self.b

    def compose(self, other: "AffineMap") -> "AffineMap":
        """self after other: (self . other)(p) = self(other(p))."""
        return AffineMap(self.A @ other.A, self.A @ other.b + self.b)

    def inverse(self) -> "AffineMap":
        A_inv = np.linalg.inv(self.A)
        return AffineMap(A_inv, -A_inv @ self.b)

    def is_identity(self, tol: float = 0.0) -> bool:
        return bool(
            np.all(np.abs(self.A - np.eye(2)) <= tol) and np.all(np.abs(self.b) <= tol)
        )

    def similarity_parts(self, tol: float = 1e-9):
        """Decompose into (scale k, rotation alpha, translation delta).

        Raises ValueError for shears, anisotropic scales, and reflections.
        """
        a, b_, c, d = self.A[0, 0], self.A[0, 1], self.A[1, 0], self.A[1, 1]
        scale = float(np.hypot(a, c))
        ref = max(1.0, scale)
        if abs(a - d) > tol * ref or abs(b_ + c) > tol * ref:
            raise ValueError("affine map is not a similarity (shear/anisotropy/reflection)")
        if scale <= 0:
            raise ValueError("similarity scale must be positive")
        alpha = float(np.arctan2(c, a))
        return scale, alpha, self.b.copy()


def project(points3d, cam: Camera, perspective_focal: float | None = None) -> np.ndarray:
    """Project (N, 3) model-space points to (N, 2) crop coordinates.

    Default is weak perspective, p = s * (X, Y) + t.  Passing a focal length
    switches to the fixed-focal pinhole variant placed at depth f/s, which
    converges to the weak-perspective result as the focal grows; it exists
    for parity experiments only.
    """
    pts = np.asarray(points3d, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    if perspective_focal is None:
        return cam.s * pts[:, :2] + cam.t
    f = float(perspective_focal)
    tz = f / cam.s
    denom = pts[:, 2] + tz
    if np.any(denom <= 0):
        raise ValueError("point behind the perspective camera plane")
    return f * pts[:, :2] / denom[:, None] + cam.t


def derive_part_bbox(keypoints2d, pad: float = 0.2) -> Bbox:
    """Box around keypoints: center = keypoint mean, extent = padded x/y range.

    The center is the mean of the points rather than the range midpoint, so
    the box is generally asymmetric about its own extent; that asymmetry is
    part of the contract.
    """
    pts = np.asarray(keypoints2d, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 2:
        raise ValueError("need at least 2 keypoints to derive a box")
    if pad < 0:
        raise ValueError("pad must be non-negative")
    span = pts.max(axis=0) - pts.min(axis=0)
    if span[0] <= 0 or span[1] <= 0:
        raise ValueError("degenerate box: keypoints have zero range")
    return Bbox(
        center=pts.mean(axis=0),
        width=span[0] * (1.0 + pad),
        height=span[1] * (1.0 + pad),
    )


def crop_affine(bbox: Bbox, image_w: int, image_h: int) -> AffineMap:
    """Affine from full-image pixel coordinates to the [-1, 1]^2 crop frame."""
    del image_w, image_h  # the box alone fixes the frame; dims kept for symmetry
    A = np.diag([2.0 / bbox.width, 2.0 / bbox.height])
    return AffineMap(A, -A @ bbox.center)


def co_update(cam: Camera, global_orient, aff: AffineMap):
    """Co-transform (camera, global orientation) under a similarity affine.

    For aff(p) = k R2(alpha) p + delta the updated ground truth is
      camera' = (s*k, k R2(alpha) t + delta)
      global_orient' = log(Rz(alpha) @ R(global_orient))
    which keeps aff(project(X, cam)) == project(Rz(alpha) X, cam') for every
    root-relative 3D point X.  Shears and reflections are rejected.
    """
    global_orient = np.asarray(global_orient, dtype=np.float64).reshape(3)
    if aff.is_identity():
        return cam.copy(), global_orient.copy()
    k, alpha, delta = aff.similarity_parts()
    new_cam = Camera(cam.s * k, aff.A @ cam.t + delta)
    new_orient = canonicalize_axis_angle(
        rotmat_to_axis_angle(rot_z(alpha) @ rodrigues(global_orient))
    )
    return new_cam, new_orient
