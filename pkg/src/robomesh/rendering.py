"""Hard part-label rasterization and a differentiable silhouette.

Rasterization rules are pinned for bit-exact reproducibility:
  * pixel-center sampling, z-buffer on barycentrically interpolated depth,
    smaller depth wins, ties broken by lower face index;
  * pixels exactly on an edge follow the top-left fill rule;
  * zero-area triangles are skipped.

The soft silhouette is sigmoid(-d / sigma) of a signed distance d taken as
the minimum over faces of the per-face signed distance (negative inside).
Distances are measured in pixels.  Its Jacobian with respect to vertex
positions is analytic and sparse: per pixel only the two endpoints of the
nearest boundary edge contribute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .camera import Camera, project

PROB_CLAMP = 1e-7


@dataclass
class RenderTarget:
    """Hard rasterization output; ``labels == part_count`` means background."""

    width: int
    height: int
    labels: np.ndarray
    depth: np.ndarray
    probability: np.ndarray
    part_count: int


@dataclass
class SoftSilhouette:
    """Soft occupancy plus its sparse Jacobian wrt normalized vertex coords.

    ``grad_vertex_ids[i, j]`` holds up to two vertex indices (-1 when absent)
    and ``grad[i, j, k]`` the matching d(prob[i, j]) / d(verts2d[id_k]).
    """

    probability: np.ndarray
    signed_distance: np.ndarray
    grad_vertex_ids: np.ndarray
    grad: np.ndarray


def _to_pixel(verts2d_norm: np.ndarray, width: int, height: int) -> np.ndarray:
    pts = np.asarray(verts2d_norm, dtype=np.float64).reshape(-1, 2)
    out = np.empty_like(pts)
    out[:, 0] = (pts[:, 0] + 1.0) * 0.5 * width
    out[:, 1] = (pts[:, 1] + 1.0) * 0.5 * height
    return out


def _is_top_left(a: np.ndarray, b: np.ndarray) -> bool:
    # y grows downward; interior is on the >= 0 side of each edge function
    if a[1] == b[1]:
        return b[0] < a[0]  # horizontal edge with interior below: top edge
    return b[1] > a[1]  # descending edge: left edge


def rasterize_parts(
    verts2d,
    depths,
    faces,
    part_of_face,
    width: int,
    height: int,
    part_count: int,
) -> RenderTarget:
    """Z-buffered per-pixel part labels for a 2D-projected mesh.

    ``verts2d`` is (V, 2) in normalized crop coordinates, ``depths`` (V,)
    model-space depth (smaller is nearer), ``part_of_face`` (F,) labels < P.
    """
    pix = _to_pixel(verts2d, width, height)
    depths = np.asarray(depths, dtype=np.float64).reshape(-1)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    part_of_face = np.asarray(part_of_face, dtype=np.int64).reshape(-1)
    if np.any(part_of_face < 0) or np.any(part_of_face >= part_count):
        raise ValueError("face part label out of range")

    labels = np.full((height, width), part_count, dtype=np.int32)
    zbuf = np.full((height, width), np.inf)

    for f_idx, face in enumerate(faces):
        v = pix[face]
        z = depths[face]
        area2 = (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[1, 1] - v[0, 1]) * (
            v[2, 0] - v[0, 0]
        )
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            v = v[[0, 2, 1]]
            z = z[[0, 2, 1]]
            area2 = -area2

        x_lo = max(int(np.floor(v[:, 0].min() - 0.5)), 0)
        x_hi = min(int(np.ceil(v[:, 0].max() - 0.5)) + 1, width)
        y_lo = max(int(np.floor(v[:, 1].min() - 0.5)), 0)
        y_hi = min(int(np.ceil(v[:, 1].max() - 0.5)) + 1, height)
        if x_lo >= x_hi or y_lo >= y_hi:
            continue

        px = np.arange(x_lo, x_hi) + 0.5
        py = np.arange(y_lo, y_hi) + 0.5
        PX, PY = np.meshgrid(px, py)

        covered = np.ones(PX.shape, dtype=bool)
        bary = np.empty((3,) + PX.shape)
        for k in range(3):
            a, b = v[(k + 1) % 3], v[(k + 2) % 3]
            w = (b[0] - a[0]) * (PY - a[1]) - (b[1] - a[1]) * (PX - a[0])
            accept = w > 0 if not _is_top_left(a, b) else w >= 0
            covered &= accept
            bary[k] = w / area2
        if not covered.any():
            continue

        depth = bary[0] * z[0] + bary[1] * z[1] + bary[2] * z[2]
        win = covered & (depth < zbuf[y_lo:y_hi, x_lo:x_hi])
        zbuf[y_lo:y_hi, x_lo:x_hi][win] = depth[win]
        labels[y_lo:y_hi, x_lo:x_hi][win] = part_of_face[f_idx]

    return RenderTarget(
        width=width,
        height=height,
        labels=labels,
        depth=zbuf,
        probability=(labels != part_count).astype(np.float64),
        part_count=part_count,
    )


def part_of_face_from_vertices(faces, part_of_vertex) -> np.ndarray:
    """Per-face label by vertex majority; three-way ties fall back to vertex 0."""
    faces = np.asarray(faces, dtype=np.int64)
    labels = np.asarray(part_of_vertex, dtype=np.int64)[faces]  # (F, 3)
    out = np.empty(len(faces), dtype=np.int64)
    for i, row in enumerate(labels):
        if row[0] == row[1] or row[0] == row[2]:
            out[i] = row[0]
        elif row[1] == row[2]:
            out[i] = row[1]
        else:
            out[i] = row[0]
    return out


def soft_silhouette(verts2d, faces, sigma: float, width: int, height: int) -> SoftSilhouette:
    """Sigmoid silhouette of the triangle union with analytic sparse gradients.

    The signed distance at each pixel is min over faces of (+/- distance to
    that face's nearest edge), negative when the pixel lies inside the face.
    Gradients are with respect to the normalized vertex coordinates and are
    exact wherever the nearest edge is unique.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    verts2d = np.asarray(verts2d, dtype=np.float64).reshape(-1, 2)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    pix = _to_pixel(verts2d, width, height)
    n_faces = len(faces)

    # pixel centers, flattened row-major
    qx, qy = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
    Q = np.stack([qx.ravel(), qy.ravel()], axis=1)  # (N, 2)
    N = Q.shape[0]

    edge_a = faces.reshape(-1)  # (3F,) vertex ids: edges (v0,v1),(v1,v2),(v2,v0)
    edge_b = faces[:, [1, 2, 0]].reshape(-1)
    a = pix[edge_a]  # (3F, 2)
    b = pix[edge_b]
    e = b - a
    ee = np.einsum("ij,ij->i", e, e)
    ee_safe = np.where(ee > 0, ee, 1.0)

    w = Q[:, None, :] - a[None, :, :]  # (N, 3F, 2)
    t = np.clip(np.einsum("nij,ij->ni", w, e) / ee_safe, 0.0, 1.0)
    r = w - t[:, :, None] * e[None, :, :]
    dist_edge = np.sqrt(np.einsum("nij,nij->ni", r, r))  # (N, 3F)

    cross = e[None, :, 0] * w[:, :, 1] - e[None, :, 1] * w[:, :, 0]  # (N, 3F)
    cross3 = cross.reshape(N, n_faces, 3)
    inside = np.all(cross3 >= 0, axis=2) | np.all(cross3 <= 0, axis=2)
    degenerate = (ee.reshape(n_faces, 3) == 0).any(axis=1)
    inside[:, degenerate] = False

    dist3 = dist_edge.reshape(N, n_faces, 3)
    edge_arg = np.argmin(dist3, axis=2)  # (N, F)
    dist_face = np.take_along_axis(dist3, edge_arg[:, :, None], axis=2)[:, :, 0]
    sd_face = np.where(inside, -dist_face, dist_face)
    sd_face[:, degenerate] = np.inf

    face_arg = np.argmin(sd_face, axis=1)  # (N,)
    sd = sd_face[np.arange(N), face_arg]

    prob = expit(-sd / sigma)

    # gradient of the achieving edge's distance wrt its endpoints (envelope rule)
    flat_edge = face_arg * 3 + edge_arg[np.arange(N), face_arg]  # (N,)
    t_star = t[np.arange(N), flat_edge]
    r_star = r[np.arange(N), flat_edge]
    d_star = dist_edge[np.arange(N), flat_edge]
    safe = d_star > 1e-12
    rhat = np.zeros_like(r_star)
    rhat[safe] = r_star[safe] / d_star[safe, None]
    sign = np.where(sd <= 0, -1.0, 1.0)

    # dp/d(vertex, pixel space); chain through sigmoid and the sign
    coef = prob * (1.0 - prob) / sigma * sign  # (N,)
    grad_a = coef[:, None] * (1.0 - t_star)[:, None] * rhat
    grad_b = coef[:, None] * t_star[:, None] * rhat

    # pixel -> normalized coordinate chain
    scale = np.array([0.5 * width, 0.5 * height])
    grad_a *= scale
    grad_b *= scale

    ids = np.stack([edge_a[flat_edge], edge_b[flat_edge]], axis=1).astype(np.int32)
    grads = np.stack([grad_a, grad_b], axis=1)
    ids[~safe] = -1
    grads[~safe] = 0.0

    return SoftSilhouette(
        probability=prob.reshape(height, width),
        signed_distance=sd.reshape(height, width),
        grad_vertex_ids=ids.reshape(height, width, 2),
        grad=grads.reshape(height, width, 2, 2),
    )


def accumulate_vertex_grad(sil: SoftSilhouette, pixel_weights, n_vertices: int) -> np.ndarray:
    """Sum d(sum_ij weight_ij * prob_ij) / d(verts2d) into a dense (V, 2) array."""
    w = np.asarray(pixel_weights, dtype=np.float64)
    ids = sil.grad_vertex_ids.reshape(-1, 2)
    vals = sil.grad.reshape(-1, 2, 2) * w.reshape(-1, 1, 1)
    out = np.zeros((n_vertices, 2))
    valid = ids >= 0
    np.add.at(out, ids[valid], vals[valid])
    return out


def projected_silhouette_loss(prob, gt_mask):
    """Mean binary cross-entropy with clamped probabilities.

    Returns (loss, d loss / d prob); the gradient is zero where the clamp is
    active.
    """
    prob = np.asarray(prob, dtype=np.float64)
    gt_mask = np.asarray(gt_mask, dtype=np.float64)
    if prob.shape != gt_mask.shape:
        raise ValueError(f"shape mismatch: {prob.shape} vs {gt_mask.shape}")
    clamped = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(np.mean(-gt_mask * np.log(clamped) - (1.0 - gt_mask) * np.log1p(-clamped)))
    grad = (clamped - gt_mask) / (clamped * (1.0 - clamped)) / prob.size
    grad = np.where((prob > PROB_CLAMP) & (prob < 1.0 - PROB_CLAMP), grad, 0.0)
    return loss, grad


def projected_vertex_error(pred_verts2d, gt_verts2d) -> float:
    """Mean Euclidean distance between corresponding projected vertices."""
    pred = np.asarray(pred_verts2d, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(gt_verts2d, dtype=np.float64).reshape(-1, 2)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return float(np.mean(np.linalg.norm(pred - gt, axis=1)))


def silhouette_camera_fit(
    verts3d,
    cam: Camera,
    faces,
    gt_mask,
    sigma: float = 1.5,
    width: int = 64,
    height: int = 64,
):
    """Silhouette loss of a projected mesh plus gradients wrt camera (s, t).

    Chains projected_silhouette_loss through soft_silhouette and the linear
    weak-perspective projection.  Returns (loss, d/ds, d/dt (2,)).
    """
    verts3d = np.asarray(verts3d, dtype=np.float64).reshape(-1, 3)
    verts2d = project(verts3d, cam)
    sil = soft_silhouette(verts2d, faces, sigma, width, height)
    loss, dprob = projected_silhouette_loss(sil.probability, gt_mask)
    dverts = accumulate_vertex_grad(sil, dprob, len(verts3d))
    ds = float(np.sum(dverts * verts3d[:, :2]))
    dt = dverts.sum(axis=0)
    return loss, ds, dt


def dump_label_ppm(labels, part_count: int, path) -> None:
    """Plain-text PPM of a label buffer with a deterministic palette."""
    labels = np.asarray(labels)
    h, w = labels.shape
    palette = _palette(part_count)
    with open(str(path), "w") as fh:
        fh.write(f"P3\n{w} {h}\n255\n")
        for row in labels:
            fh.write(" ".join(" ".join(str(c) for c in palette[v]) for v in row))
            fh.write("\n")


def dump_prob_pgm(prob, path) -> None:
    """Plain-text PGM of a probability buffer, 0..255 grayscale."""
    prob = np.clip(np.asarray(prob, dtype=np.float64), 0.0, 1.0)
    h, w = prob.shape
    quantized = np.rint(prob * 255).astype(int)
    with open(str(path), "w") as fh:
        fh.write(f"P2\n{w} {h}\n255\n")
        for row in quantized:
            fh.write(" ".join(str(v) for v in row))
            fh.write("\n")


def dump_csv_grid(array, path) -> None:
    np.savetxt(str(path), np.asarray(array), delimiter=",", fmt="%.9g")


def _palette(part_count: int) -> np.ndarray:
    """part_count foreground colors plus black for the background label."""
    hues = np.linspace(0.0, 1.0, part_count, endpoint=False)
    colors = np.empty((part_count + 1, 3), dtype=int)
    for i, h in enumerate(hues):
        colors[i] = np.rint(255 * _hsv_one(h)).astype(int)
    colors[part_count] = 0
    return colors


def _hsv_one(h: float, s: float = 0.75, v: float = 0.95) -> np.ndarray:
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    return np.array(
        [(v, t, p), (q, v, p), (p, v, t), (p, q, t), (t, p, v), (v, p, q)][i]
    )
