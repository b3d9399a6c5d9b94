"""Pose representations, pairwise distances, and the batch contrastive loss.

The loss pulls each predicted pairwise distance toward the matching
ground-truth pairwise distance: positives should sit as close together as
their ground truths do, and negatives as far apart as theirs do.  Positive
samples are built from location- and color-variant augmentations only;
anything that changes the global orientation is excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import augmentation
from .body_model import BodyModelTemplate, BodyParams, forward, regress_joints
from .rotations import canonicalize_axis_angle, rodrigues, rotmat_to_rot6d
from .samples import SampleRecord

KINDS = ("pose_concat", "go_plus_pose", "keypoints")
ROTATION_FORMATS = ("axis_angle", "rot6d", "rotmat")

POSITIVE_KINDS = (
    "translate_x",
    "translate_y",
    "scale",
    "hue",
    "brightness",
    "contrast",
    "sharpness",
    "grayness",
    "low_resolution",
)


@dataclass(frozen=True)
class Representation:
    """A flat pose embedding; ``sections`` splits go_plus_pose sub-vectors."""

    kind: str
    vector: np.ndarray
    rotation_format: str | None = None
    sections: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "vector", np.asarray(self.vector, dtype=np.float64).reshape(-1)
        )


@dataclass
class ContrastiveConfig:
    """Loss weights and the elementwise distance metric.

    ``tau_neg=None`` balances the aggregate negative term against the single
    positive term, i.e. 1 / (2N - 2) for a batch of N pairs.
    """

    tau_pos: float = 1.0
    tau_neg: float | None = None
    metric: str = "L1"
    smooth_l1_beta: float = 1.0
    go_weight: float = 1.0
    pose_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.metric not in ("L1", "SmoothL1", "MSE"):
            raise ValueError(f"unknown metric '{self.metric}'")
        if self.tau_pos < 0 or (self.tau_neg is not None and self.tau_neg < 0):
            raise ValueError("tau weights must be non-negative")

    def resolved_tau_neg(self, n_pairs: int) -> float:
        if self.tau_neg is not None:
            return self.tau_neg
        negatives = 2 * n_pairs - 2
        return 1.0 / negatives if negatives > 0 else 0.0


def _convert_rotation(axis_angle: np.ndarray, fmt: str) -> np.ndarray:
    if fmt == "axis_angle":
        # canonical range keeps distances free of 2*pi aliasing
        return canonicalize_axis_angle(axis_angle)
    R = rodrigues(axis_angle)
    if fmt == "rot6d":
        return rotmat_to_rot6d(R)
    if fmt == "rotmat":
        return R.reshape(9)
    raise ValueError(f"unknown rotation format '{fmt}'")


def make_representation(
    params: BodyParams,
    template: BodyModelTemplate,
    kind: str,
    rotation_format: str = "axis_angle",
) -> Representation:
    """Build one of the three pose representations.

    ``pose_concat`` concatenates the converted global orientation with every
    converted joint rotation; ``go_plus_pose`` keeps the two as tagged
    sub-vectors; ``keypoints`` regresses joints from the posed mesh,
    root-aligns them, and divides by the mean bone length of the tree so the
    embedding is camera- and scale-free.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown representation kind '{kind}'")
    if kind == "keypoints":
        vertices, _ = forward(template, params)
        joints = regress_joints(vertices, template.joint_regressor)
        joints = joints - joints[0]
        parents = template.parents
        bone_lengths = np.linalg.norm(
            joints[1:] - joints[parents[1:]], axis=1
        )
        mean_bone = float(bone_lengths.mean())
        if mean_bone <= 0:
            raise ValueError("degenerate skeleton: zero mean bone length")
        return Representation(kind="keypoints", vector=(joints / mean_bone).reshape(-1))
    if rotation_format not in ROTATION_FORMATS:
        raise ValueError(f"unknown rotation format '{rotation_format}'")
    go = _convert_rotation(params.global_orient, rotation_format)
    pose_parts = [_convert_rotation(r, rotation_format) for r in params.pose]
    pose_vec = np.concatenate(pose_parts) if pose_parts else np.zeros(0)
    if kind == "pose_concat":
        return Representation(
            kind=kind,
            vector=np.concatenate([go, pose_vec]),
            rotation_format=rotation_format,
        )
    return Representation(
        kind=kind,
        vector=np.concatenate([go, pose_vec]),
        rotation_format=rotation_format,
        sections=(go.size, pose_vec.size),
    )


def _elementwise(diff: np.ndarray, cfg: ContrastiveConfig) -> float:
    if diff.size == 0:
        return 0.0
    a = np.abs(diff)
    if cfg.metric == "L1":
        return float(a.mean())
    if cfg.metric == "MSE":
        return float((diff**2).mean())
    beta = cfg.smooth_l1_beta
    vals = np.where(a < beta, 0.5 * diff**2 / beta, a - 0.5 * beta)
    return float(vals.mean())


def pair_distance(a: Representation, b: Representation, cfg: ContrastiveConfig) -> float:
    """Mean elementwise metric; go_plus_pose sums its two tagged parts."""
    if a.kind != b.kind or a.rotation_format != b.rotation_format:
        raise ValueError(
            f"representation mismatch: {a.kind}/{a.rotation_format} vs {b.kind}/{b.rotation_format}"
        )
    if a.vector.shape != b.vector.shape:
        raise ValueError("representation vectors differ in length")
    diff = a.vector - b.vector
    if a.kind != "go_plus_pose":
        return _elementwise(diff, cfg)
    n_go = a.sections[0]
    return cfg.go_weight * _elementwise(diff[:n_go], cfg) + cfg.pose_weight * _elementwise(
        diff[n_go:], cfg
    )


def contrastive_loss(preds, gts, pairs, cfg: ContrastiveConfig | None = None):
    """Batch loss over 2N representations with N (anchor, positive) pairs.

    For each anchor i with positive j the loss accumulates
      tau_pos * |d(p_i, p_j) - d(z_i, z_j)|
      + tau_neg * sum_{k != i, j} |d(p_i, p_k) - d(z_i, z_k)|
    where z are predictions and p ground truths.  Returns (total, per-anchor
    breakdown dicts).  ``pairs`` must tile the batch indices exactly once.
    """
    cfg = cfg or ContrastiveConfig()
    preds = list(preds)
    gts = list(gts)
    if len(preds) != len(gts):
        raise ValueError("preds and gts must have equal length")
    n_items = len(preds)
    if n_items == 0 or n_items % 2 != 0:
        raise ValueError("batch must contain 2N representations")
    pairs = [(int(a), int(b)) for a, b in pairs]
    seen = sorted(i for pair in pairs for i in pair)
    if seen != list(range(n_items)) or any(a == b for a, b in pairs):
        raise ValueError("pairs must partition the batch into disjoint (anchor, positive) pairs")

    n_pairs = len(pairs)
    tau_pos = cfg.tau_pos
    tau_neg = cfg.resolved_tau_neg(n_pairs)
    if tau_pos + tau_neg <= 0:
        raise ValueError("tau_pos + tau_neg must be positive")

    d_z = np.zeros((n_items, n_items))
    d_p = np.zeros((n_items, n_items))
    for i in range(n_items):
        for k in range(i + 1, n_items):
            d_z[i, k] = d_z[k, i] = pair_distance(preds[i], preds[k], cfg)
            d_p[i, k] = d_p[k, i] = pair_distance(gts[i], gts[k], cfg)

    gap = np.abs(d_p - d_z)
    total = 0.0
    breakdown = []
    for anchor, positive in pairs:
        pos_term = tau_pos * gap[anchor, positive]
        neg_idx = [k for k in range(n_items) if k not in (anchor, positive)]
        neg_term = tau_neg * gap[anchor, neg_idx].sum() if neg_idx else 0.0
        total += pos_term + neg_term
        breakdown.append({"anchor": anchor, "positive": pos_term, "negative": neg_term})
    return float(total), breakdown


def build_positive(sample: SampleRecord, rng_seed: int) -> SampleRecord:
    """Augmented copy for the positive pair: 1-3 location/color-variant
    augmentations with co-updated ground truth; never rotation or flips."""
    rng = np.random.default_rng(rng_seed)
    count = int(rng.integers(1, 4))
    kinds = rng.choice(len(POSITIVE_KINDS), size=count, replace=False)
    out = sample
    for kind_idx in kinds:
        kind = POSITIVE_KINDS[int(kind_idx)]
        lo, hi = augmentation.SWEEP_BOUNDS[kind]
        magnitude = float(rng.uniform(lo, hi))
        out = augmentation.apply_full(out, augmentation.AugmentationSpec(kind, magnitude))
    return out


def retrieve_topk(query: Representation, gallery, k: int, cfg: ContrastiveConfig | None = None):
    """Indices of the k nearest gallery items, ascending distance, stable ties."""
    cfg = cfg or ContrastiveConfig()
    gallery = list(gallery)
    if not gallery:
        raise ValueError("gallery must be non-empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    dists = np.array([pair_distance(query, item, cfg) for item in gallery])
    order = np.argsort(dists, kind="stable")
    return [int(i) for i in order[: min(k, len(gallery))]]
