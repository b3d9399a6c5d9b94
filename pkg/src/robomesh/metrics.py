"""Evaluation metrics for 3D pose/mesh estimates.

Point sets are (N, 3) in meters; errors are reported in millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Bbox

MM_PER_METER = 1000.0


@dataclass
class AlignmentResult:
    """Similarity transform minimizing sum ||s R x + t - y||^2, plus residual (mm)."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray
    residual: float


def procrustes_align(source, target) -> AlignmentResult:
    """Least-squares similarity alignment of ``source`` onto ``target``.

    Umeyama's closed form: center both sets, SVD the cross-covariance, and
    correct the rotation sign so no reflection sneaks in.  Degenerate inputs
    (fewer than 3 points, or rank < 2 after centering) raise ValueError.
    """
    X = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    Y = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    n = X.shape[0]
    if n < 3:
        raise ValueError("need at least 3 points")
    mu_x = X.mean(axis=0)
    mu_y = Y.mean(axis=0)
    Xc = X - mu_x
    Yc = Y - mu_y
    cov = Yc.T @ Xc / n
    U, S, Vt = np.linalg.svd(cov)
    if np.linalg.matrix_rank(Xc, tol=1e-12) < 2:
        raise ValueError("degenerate point set: rank < 2 after centering")
    d = np.sign(np.linalg.det(U @ Vt))
    D = np.diag([1.0, 1.0, d])
    R = U @ D @ Vt
    var_x = (Xc**2).sum() / n
    if var_x <= 0:
        raise ValueError("degenerate point set: zero variance")
    scale = float(np.trace(np.diag(S) @ D) / var_x)
    if scale <= 0:
        raise ValueError("degenerate alignment: non-positive scale")
    t = mu_y - scale * R @ mu_x
    aligned = scale * X @ R.T + t
    residual = float(np.mean(np.linalg.norm(aligned - Y, axis=1)) * MM_PER_METER)
    return AlignmentResult(scale=scale, rotation=R, translation=t, residual=residual)


def apply_alignment(result: AlignmentResult, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return result.scale * pts @ result.rotation.T + result.translation


def mpjpe(pred, gt, root_index: int = 0) -> float:
    """Mean per-joint error (mm) after aligning the root joint translation."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if not 0 <= root_index < pred.shape[0]:
        raise ValueError(f"root index {root_index} out of range")
    pred = pred - pred[root_index]
    gt = gt - gt[root_index]
    return float(np.mean(np.linalg.norm(pred - gt, axis=1)) * MM_PER_METER)


def pve(pred_verts, gt_verts, pred_root=None, gt_root=None) -> float:
    """Mean per-vertex error (mm); roots are joint positions when supplied."""
    pred = np.asarray(pred_verts, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt_verts, dtype=np.float64).reshape(-1, 3)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred_root is not None:
        pred = pred - np.asarray(pred_root, dtype=np.float64).reshape(3)
    if gt_root is not None:
        gt = gt - np.asarray(gt_root, dtype=np.float64).reshape(3)
    return float(np.mean(np.linalg.norm(pred - gt, axis=1)) * MM_PER_METER)


def pa_mpjpe(pred, gt) -> float:
    """Mean joint error (mm) after optimal similarity alignment."""
    return procrustes_align(pred, gt).residual


def pa_pve(pred_verts, gt_verts) -> float:
    """Mean vertex error (mm) after optimal similarity alignment."""
    return procrustes_align(pred_verts, gt_verts).residual


def f_score(pred_verts, gt_verts, thresholds=(0.005, 0.015), align: bool = True):
    """F-score at distance thresholds (meters), after Procrustes alignment.

    Precision: fraction of predicted points within tau of some ground-truth
    point; recall is the converse; returns {tau: harmonic mean}.
    """
    pred = np.asarray(pred_verts, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt_verts, dtype=np.float64).reshape(-1, 3)
    if pred.size == 0 or gt.size == 0:
        raise ValueError("point sets must be non-empty")
    if align:
        pred = apply_alignment(procrustes_align(pred, gt), pred)
    d2 = ((pred[:, None, :] - gt[None, :, :]) ** 2).sum(axis=2)
    pred_to_gt = np.sqrt(d2.min(axis=1))
    gt_to_pred = np.sqrt(d2.min(axis=0))
    out = {}
    for tau in thresholds:
        precision = float(np.mean(pred_to_gt <= tau))
        recall = float(np.mean(gt_to_pred <= tau))
        out[tau] = (
            0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        )
    return out


def bbox_iou(a: Bbox, b: Bbox) -> float:
    """Intersection over union of two axis-aligned boxes."""
    ax0, ax1 = a.x_range
    ay0, ay1 = a.y_range
    bx0, bx1 = b.x_range
    by0, by1 = b.y_range
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a.width * a.height + b.width * b.height - inter
    return inter / union if union > 0 else 0.0
