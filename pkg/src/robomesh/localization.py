"""Sparse/dense localization math: 3D soft-argmax and supervision losses.

Heat volumes store raw logits; the softmax lives inside the soft-argmax so
the normalization point is fixed in one place.  Coordinates come back in
(depth, row, column) voxel order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class HeatVolume:
    """Per-joint 3D logit volumes, shape (J, D, H, W)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4 or v.shape[0] < 1:
            raise ValueError("heat volume must be (J, D, H, W) with J >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("heat volume must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class PartSegMap:
    """Part-segmentation logits, shape (P+1, H, W); channel P is background."""

    logits: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.logits, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] < 2:
            raise ValueError("segmentation logits must be (P+1, H, W) with P >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("segmentation logits must be finite")
        object.__setattr__(self, "logits", v)

    @property
    def part_count(self) -> int:
        return self.logits.shape[0] - 1


def soft_argmax3d(vol: HeatVolume, temperature: float = 1.0) -> np.ndarray:
    """Coordinate expectation under softmax(values / temperature).

    Returns (J, 3) continuous (d, h, w) coordinates, each inside the voxel
    grid.  Low temperatures sharpen toward the argmax voxel.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    v = vol.values / temperature
    J, D, H, W = v.shape
    flat = v.reshape(J, -1)
    log_norm = logsumexp(flat, axis=1, keepdims=True)
    prob = np.exp(flat - log_norm).reshape(J, D, H, W)
    d_idx = np.arange(D, dtype=np.float64)
    h_idx = np.arange(H, dtype=np.float64)
    w_idx = np.arange(W, dtype=np.float64)
    out = np.empty((J, 3))
    out[:, 0] = np.einsum("jdhw,d->j", prob, d_idx)
    out[:, 1] = np.einsum("jdhw,h->j", prob, h_idx)
    out[:, 2] = np.einsum("jdhw,w->j", prob, w_idx)
    return out


def gaussian_heatmap(centers, dims, sigma: float = 1.5) -> HeatVolume:
    """Synthetic ground-truth volumes: log-Gaussian logits at quantized centers.

    ``centers`` is (J, 3) in (d, h, w) voxel coordinates; each center is
    rounded to its voxel before the Gaussian is laid down, so soft-argmax at
    unit temperature recovers the quantized location (interior peaks recover
    it to well under 0.1 voxel; truncation at the boundary biases the mean).
    """
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    D, H, W = dims
    q = np.rint(centers)
    d = np.arange(D, dtype=np.float64)
    h = np.arange(H, dtype=np.float64)
    w = np.arange(W, dtype=np.float64)
    dd = (d[None, :] - q[:, 0:1]) ** 2
    hh = (h[None, :] - q[:, 1:2]) ** 2
    ww = (w[None, :] - q[:, 2:3]) ** 2
    logits = -(
        dd[:, :, None, None] + hh[:, None, :, None] + ww[:, None, None, :]
    ) / (2.0 * sigma**2)
    return HeatVolume(logits)


def segmentation_ce_loss(pred: PartSegMap, labels) -> float:
    """Mean cross-entropy between the softmaxed logits and integer labels."""
    labels = np.asarray(labels)
    C, H, W = pred.logits.shape
    if labels.shape != (H, W):
        raise ValueError(f"labels must be ({H}, {W}), got {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    if labels.min() < 0 or labels.max() >= C:
        raise ValueError(f"label out of range [0, {C - 1}]")
    log_norm = logsumexp(pred.logits, axis=0)
    picked = np.take_along_axis(pred.logits, labels[None], axis=0)[0]
    return float(np.mean(log_norm - picked))


def l1_loss(pred, gt, mask=None) -> float:
    """Mean absolute difference, optionally weighted per element by ``mask``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    diff = np.abs(pred - gt)
    if mask is None:
        return float(diff.mean())
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != pred.shape:
        raise ValueError(f"mask shape {mask.shape} must match {pred.shape}")
    total = mask.sum()
    if total <= 0:
        raise ValueError("mask weights must have positive sum")
    return float((diff * mask).sum() / total)
