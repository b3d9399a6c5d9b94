"""The ten benchmark augmentations, their taxonomy, and ground-truth co-updates.

Image-variant kinds change pixels only; location-variant kinds move the
subject in the crop without changing 3D pose; the pose-variant kind
(rotation) changes both the in-plane location and the global orientation.

Exact pixel formulas (f is the magnitude, images are float arrays in [0, 1],
every output is clamped back to [0, 1]):
  brightness  out = (1 + f) * img                      (blend with black)
  contrast    out = m + (1 + f) * (img - m),  m = mean luminance scalar
  grayness    out = g + (1 + f) * (img - g),  g = per-pixel Rec.601 luminance
  sharpness   out = blur + (1 + f) * (img - blur), 3x3 box blur, edges replicated
  hue         RGB -> HSV, H <- (H + f) mod 1, -> RGB
  low_resolution  bilinear downsample by the factor, bilinear upsample back
At f = -1 the blends return their base image (black / mean / gray / blurred);
f = 0 (factor 1 for low_resolution) is a bit-exact no-op.

Geometric kinds act on normalized crop coordinates via an AffineMap and the
image is resampled through it with bilinear interpolation and zero padding:
  translate_x f   p' = p + (2f, 0)        (f of the crop width)
  translate_y f   p' = p + (0, 2f)
  scale f         p' = p / (1 - f)        (tighter crop magnifies content)
  rotation a      p' = R(a degrees) p     (about the crop center)
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from scipy import ndimage

from .camera import AffineMap, co_update, derive_part_bbox
from .rotations import rot_z
from .samples import SampleRecord

IMAGE_VARIANT = "image-variant"
LOCATION_VARIANT = "location-variant"
POSE_VARIANT = "pose-variant"

TAXONOMY = {
    "hue": IMAGE_VARIANT,
    "sharpness": IMAGE_VARIANT,
    "grayness": IMAGE_VARIANT,
    "contrast": IMAGE_VARIANT,
    "brightness": IMAGE_VARIANT,
    "low_resolution": IMAGE_VARIANT,
    "translate_x": LOCATION_VARIANT,
    "translate_y": LOCATION_VARIANT,
    "scale": LOCATION_VARIANT,
    "rotation": POSE_VARIANT,
}
KINDS = tuple(TAXONOMY)

# benchmark sweep ranges; the low-resolution upper end is a chosen default
# (only the factor-2 example and the >= 1 floor are pinned elsewhere)
SWEEP_BOUNDS = {
    "translate_x": (-0.3, 0.3),
    "translate_y": (-0.3, 0.3),
    "scale": (-0.5, 0.5),
    "rotation": (-60.0, 60.0),
    "hue": (-0.5, 0.5),
    "grayness": (-0.5, 0.5),
    "contrast": (-0.5, 0.5),
    "brightness": (-0.5, 0.5),
    "sharpness": (-1.0, 1.0),
    "low_resolution": (1.0, 4.0),
}

IDENTITY_MAGNITUDE = {kind: (1.0 if kind == "low_resolution" else 0.0) for kind in KINDS}

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentationSpec:
    """One augmentation: kind, magnitude, and the derived taxonomy tag.

    Construction checks the mathematical domain of the magnitude; the
    tighter benchmark sweep ranges are enforced by ``in_sweep_bounds`` so
    endpoint behaviors (e.g. brightness -1 giving a black image) stay
    expressible.
    """

    kind: str
    magnitude: float

    def __post_init__(self) -> None:
        if self.kind not in TAXONOMY:
            raise ValueError(f"unknown augmentation kind '{self.kind}'")
        m = float(self.magnitude)
        if not np.isfinite(m):
            raise ValueError("magnitude must be finite")
        if self.kind == "scale" and abs(m) >= 1.0:
            raise ValueError("scale magnitude must satisfy |f| < 1")
        if self.kind == "low_resolution" and m < 1.0:
            raise ValueError("low-resolution factor must be >= 1")
        object.__setattr__(self, "magnitude", m)

    @property
    def taxonomy(self) -> str:
        return TAXONOMY[self.kind]

    @property
    def is_identity(self) -> bool:
        return self.magnitude == IDENTITY_MAGNITUDE[self.kind]

    def in_sweep_bounds(self) -> bool:
        lo, hi = SWEEP_BOUNDS[self.kind]
        return lo <= self.magnitude <= hi

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "magnitude": self.magnitude})

    @classmethod
    def from_json(cls, text: str) -> "AugmentationSpec":
        payload = json.loads(text)
        return cls(kind=payload["kind"], magnitude=payload["magnitude"])


def classify(spec: AugmentationSpec) -> str:
    """Taxonomy tag of an augmentation kind."""
    return spec.taxonomy


def apply_image(img, spec: AugmentationSpec) -> np.ndarray:
    """Apply an image-variant augmentation; output stays (H, W, 3) in [0, 1]."""
    if spec.taxonomy != IMAGE_VARIANT:
        raise ValueError(f"'{spec.kind}' is not an image-variant augmentation")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("image must be (H, W, 3)")
    if spec.is_identity:
        return img.copy()
    f = spec.magnitude
    if spec.kind == "brightness":
        out = (1.0 + f) * img
    elif spec.kind == "contrast":
        base = float((img @ _LUMA).mean())
        out = base + (1.0 + f) * (img - base)
    elif spec.kind == "grayness":
        gray = (img @ _LUMA)[:, :, None]
        out = gray + (1.0 + f) * (img - gray)
    elif spec.kind == "sharpness":
        blur = np.stack(
            [ndimage.uniform_filter(img[:, :, c], size=3, mode="nearest") for c in range(3)],
            axis=2,
        )
        out = blur + (1.0 + f) * (img - blur)
    elif spec.kind == "hue":
        hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0))
        hsv[:, :, 0] = np.mod(hsv[:, :, 0] + f, 1.0)
        out = hsv_to_rgb(hsv)
    elif spec.kind == "low_resolution":
        h, w = img.shape[:2]
        small_h = max(1, int(round(h / f)))
        small_w = max(1, int(round(w / f)))
        out = bilinear_resize(bilinear_resize(img, small_h, small_w), h, w)
    else:  # pragma: no cover - taxonomy check above is exhaustive
        raise AssertionError(spec.kind)
    return np.clip(out, 0.0, 1.0)


def bilinear_resize(img, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center alignment and edge replication."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.copy()
    sy, sx = h / out_h, w / out_w
    matrix = np.diag([sy, sx])
    offset = np.array([0.5 * sy - 0.5, 0.5 * sx - 0.5])
    planes = img[..., None] if img.ndim == 2 else img
    out = np.stack(
        [
            ndimage.affine_transform(
                planes[:, :, c],
                matrix,
                offset=offset,
                output_shape=(out_h, out_w),
                order=1,
                mode="nearest",
            )
            for c in range(planes.shape[2])
        ],
        axis=2,
    )
    return out[:, :, 0] if img.ndim == 2 else out


def geometric_affine(spec: AugmentationSpec, crop_w: int, crop_h: int) -> AffineMap:
    """Normalized-coordinate point transform of a location/pose-variant kind."""
    del crop_w, crop_h  # the normalized frame is dimension-free
    if spec.taxonomy == IMAGE_VARIANT:
        raise ValueError(f"'{spec.kind}' has no geometric action")
    f = spec.magnitude
    if spec.kind == "translate_x":
        return AffineMap(np.eye(2), np.array([2.0 * f, 0.0]))
    if spec.kind == "translate_y":
        return AffineMap(np.eye(2), np.array([0.0, 2.0 * f]))
    if spec.kind == "scale":
        k = 1.0 / (1.0 - f)
        return AffineMap(k * np.eye(2), np.zeros(2))
    # rotation, magnitude in degrees
    a = np.deg2rad(f)
    c, s = np.cos(a), np.sin(a)
    return AffineMap(np.array([[c, -s], [s, c]]), np.zeros(2))


def warp_image(img, aff: AffineMap, order: int = 1, cval: float = 0.0) -> np.ndarray:
    """Resample an image through a normalized-coordinate affine (content map)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    # normalized -> pixel conjugation, then pixel -> index (row, col) swap
    D = np.diag([w / 2.0, h / 2.0])
    d = np.array([w / 2.0, h / 2.0])
    M = D @ aff.A @ np.linalg.inv(D)
    c = D @ aff.b + d - M @ d
    M_inv = np.linalg.inv(M)
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    T = swap @ M_inv @ swap
    half = np.array([0.5, 0.5])
    offset = swap @ (M_inv @ (half - c)) - half
    if img.ndim == 2:
        return ndimage.affine_transform(
            img, T, offset=offset, order=order, mode="constant", cval=cval
        )
    return np.stack(
        [
            ndimage.affine_transform(
                img[:, :, ch], T, offset=offset, order=order, mode="constant", cval=cval
            )
            for ch in range(img.shape[2])
        ],
        axis=2,
    )


def apply_full(sample: SampleRecord, spec: AugmentationSpec) -> SampleRecord:
    """Augment a sample, co-transforming every ground-truth field consistently.

    Image-variant kinds touch the pixels only.  Geometric kinds warp the
    image, remap 2D keypoints through the affine, co-update the camera and
    global orientation, rotate the root-centered 3D keypoints for the
    pose-variant kind, and re-derive part boxes from the remapped keypoints.
    """
    out = sample.copy()
    record = {
        "kind": spec.kind,
        "magnitude": spec.magnitude,
        "prev_camera": [sample.params.camera.s, *sample.params.camera.t.tolist()],
        "prev_global_orient": sample.params.global_orient.tolist(),
    }
    if spec.taxonomy == IMAGE_VARIANT:
        out.image = apply_image(sample.image, spec)
        out.provenance.append(record)
        return out

    h, w = sample.image.shape[:2]
    aff = geometric_affine(spec, w, h)
    if spec.is_identity:
        out.provenance.append(record)
        return out

    new_cam, new_orient = co_update(sample.params.camera, sample.params.global_orient, aff)
    out.params.camera = new_cam
    out.params.global_orient = new_orient
    out.keypoints2d = aff.apply(sample.keypoints2d)
    if spec.taxonomy == POSE_VARIANT:
        _, alpha, _ = aff.similarity_parts()
        out.keypoints3d = sample.keypoints3d @ rot_z(alpha).T
    out.image = warp_image(sample.image, aff, order=1, cval=0.0)
    if out.part_seg.size:
        if out.part_count <= 0:
            raise ValueError("sample.part_count must be set to warp its part map")
        out.part_seg = warp_image(
            sample.part_seg.astype(np.float64), aff, order=0, cval=float(out.part_count)
        ).astype(sample.part_seg.dtype)
    if out.bbox_groups:
        kp_pix = np.empty_like(out.keypoints2d)
        kp_pix[:, 0] = (out.keypoints2d[:, 0] + 1.0) * 0.5 * w
        kp_pix[:, 1] = (out.keypoints2d[:, 1] + 1.0) * 0.5 * h
        out.part_bboxes = {
            name: derive_part_bbox(kp_pix[list(idx)], pad=out.bbox_pad)
            for name, idx in out.bbox_groups.items()
        }
    out.provenance.append(record)
    return out


def sweep_grid(kind: str, n_steps: int) -> list[AugmentationSpec]:
    """Evenly spaced magnitudes over the sweep range, always containing the
    identity magnitude (for even step counts the nearest cell is snapped)."""
    if kind not in TAXONOMY:
        raise ValueError(f"unknown augmentation kind '{kind}'")
    if n_steps < 2:
        raise ValueError("need at least 2 steps")
    lo, hi = SWEEP_BOUNDS[kind]
    grid = np.linspace(lo, hi, n_steps)
    identity = IDENTITY_MAGNITUDE[kind]
    grid[int(np.argmin(np.abs(grid - identity)))] = identity
    return [AugmentationSpec(kind, float(m)) for m in grid]
