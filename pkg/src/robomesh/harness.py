"""Synthetic data generation, loss assembly, and the robustness sweep.

Sweep evaluation frame: predicted and ground-truth joints/vertices are
compared after the weak-perspective lift K = (s*X + t_x, s*Y + t_y, s*Z)
into crop-anchored coordinates, without removing the root translation again.
Location-variant augmentations leave root-aligned model-space 3D unchanged
by definition, so only this camera-anchored frame can register the crop
misalignment the sweep exists to measure.  Lifted errors are reported in
milli-units of the normalized crop (x1000, matching the millimeter scale
convention of the metric suite).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .augmentation import KINDS, AugmentationSpec, apply_full, sweep_grid
from .body_model import BodyModelTemplate, BodyParams, forward
from .camera import Camera, derive_part_bbox, project
from .rendering import part_of_face_from_vertices, rasterize_parts, _palette
from .samples import SampleRecord, params_from_dict

LOSS_TERMS = ("3d", "2d", "bm", "proj", "segm", "con", "box")
SWEEP_METRICS = ("mpjpe", "pa_mpjpe", "pve", "pa_pve", "pvE2d", "iou")


class EstimatorError(RuntimeError):
    """An estimator failed on one sample; the sweep flags it and continues."""


@dataclass
class LossWeights:
    """Per-term weights of the total training loss."""

    lambda_3d: float = 1.0
    lambda_2d: float = 1.0
    lambda_bm: float = 1.0
    lambda_proj: float = 1.0
    lambda_segm: float = 1.0
    lambda_con: float = 1.0
    lambda_box: float = 1.0

    def __post_init__(self) -> None:
        for term in LOSS_TERMS:
            if getattr(self, f"lambda_{term}") < 0:
                raise ValueError(f"lambda_{term} must be non-negative")

    @classmethod
    def from_dict(cls, payload: dict) -> "LossWeights":
        known = {f"lambda_{t}" for t in LOSS_TERMS}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown loss weights: {sorted(unknown)}")
        return cls(**payload)


def total_loss(components: dict, weights: LossWeights | None = None):
    """Weighted sum of per-term loss values; returns (total, breakdown)."""
    weights = weights or LossWeights()
    unknown = set(components) - set(LOSS_TERMS)
    if unknown:
        raise ValueError(f"unknown loss terms: {sorted(unknown)}")
    breakdown = {}
    total = 0.0
    for term in LOSS_TERMS:
        value = float(components.get(term, 0.0))
        if not np.isfinite(value) or value < 0:
            raise ValueError(f"loss term '{term}' must be finite and non-negative")
        contribution = getattr(weights, f"lambda_{term}") * value
        breakdown[term] = contribution
        total += contribution
    return total, breakdown


@dataclass
class MetricReport:
    """Sweep results: one row per (kind, magnitude, metric)."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def value(self, kind: str, magnitude: float, metric: str) -> float:
        for row in self.rows:
            if (
                row["kind"] == kind
                and abs(row["magnitude"] - magnitude) < 1e-12
                and row["metric"] == metric
            ):
                return row["value"]
        raise KeyError((kind, magnitude, metric))

    def series(self, kind: str, metric: str):
        """[(magnitude, value), ...] sorted by magnitude."""
        pts = [
            (row["magnitude"], row["value"])
            for row in self.rows
            if row["kind"] == kind and row["metric"] == metric
        ]
        return sorted(pts)


# ---------------------------------------------------------------------------
# synthetic dataset
# ---------------------------------------------------------------------------


def _sample_ball(rng: np.random.Generator, radius: float) -> np.ndarray:
    """Uniform point in the 3-ball of the given radius."""
    if radius <= 0:
        return np.zeros(3)
    direction = rng.standard_normal(3)
    norm = np.linalg.norm(direction)
    if norm < 1e-12:
        return np.zeros(3)
    return direction / norm * radius * rng.uniform() ** (1.0 / 3.0)


def render_sample_image(
    template: BodyModelTemplate, verts_centered, cam: Camera, size: int
):
    """Colorized part-label rasterization plus the raw label map."""
    verts2d = project(verts_centered, cam)
    target = rasterize_parts(
        verts2d,
        verts_centered[:, 2],
        template.faces,
        part_of_face_from_vertices(template.faces, template.part_of_vertex),
        size,
        size,
        template.part_count,
    )
    palette = _palette(template.part_count).astype(np.float64) / 255.0
    return palette[target.labels], target.labels.astype(np.int32)


def gen_dataset(
    template: BodyModelTemplate,
    n: int,
    rng_seed: int = 0,
    pose_scale: float = 0.3,
    image_size: int = 64,
    bbox_pad: float = 0.2,
):
    """Random, fully self-consistent samples rendered from the template.

    Shapes are N(0, 0.5^2), every joint axis-angle (global orientation
    included) is uniform in the ball of radius ``pose_scale``, cameras draw
    s in [0.8, 1.2] and t in [-0.1, 0.1]^2.  Deterministic for a fixed seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    J = template.joint_count
    samples = []
    groups = _default_bbox_groups(J)
    for _ in range(n):
        params = BodyParams(
            global_orient=_sample_ball(rng, pose_scale),
            pose=np.stack([_sample_ball(rng, pose_scale) for _ in range(J - 1)]),
            shape=rng.normal(0.0, 0.5, size=template.shape_count),
            camera=Camera(rng.uniform(0.8, 1.2), rng.uniform(-0.1, 0.1, size=2)),
        )
        verts, joints = forward(template, params)
        root = joints[0].copy()
        verts_c = verts - root
        joints_c = joints - root
        keypoints2d = project(joints_c, params.camera)
        image, labels = render_sample_image(template, verts_c, params.camera, image_size)
        kp_pix = (keypoints2d + 1.0) * 0.5 * image_size
        part_bboxes = {
            name: derive_part_bbox(kp_pix[list(idx)], pad=bbox_pad)
            for name, idx in groups.items()
        }
        sample = SampleRecord(
            image=image,
            params=params,
            keypoints2d=keypoints2d,
            keypoints3d=joints_c,
            part_seg=labels,
            part_bboxes=part_bboxes,
            bbox_groups=groups,
            provenance=[],
            part_count=template.part_count,
            bbox_pad=bbox_pad,
        )
        sample.validate()
        samples.append(sample)
    return samples


def _default_bbox_groups(joint_count: int) -> dict:
    if joint_count < 4:
        return {"all": tuple(range(joint_count))}
    half = joint_count // 2
    return {
        "proximal": tuple(range(half)),
        "distal": tuple(range(half, joint_count)),
    }


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def passthrough_estimator(sample: SampleRecord, rng=None) -> BodyParams:
    """Oracle: echo the (co-updated) ground truth of the augmented sample."""
    del rng
    return sample.params.copy()


def crop_naive_estimator(sample: SampleRecord, rng=None) -> BodyParams:
    """Ignores the crop transform: rolls camera and global orientation back
    to their values before the first recorded augmentation."""
    del rng
    params = sample.params.copy()
    if sample.provenance:
        first = sample.provenance[0]
        params.camera = Camera(first["prev_camera"][0], np.asarray(first["prev_camera"][1:]))
        params.global_orient = np.asarray(first["prev_global_orient"], dtype=np.float64)
    return params


class ExecEstimator:
    """External estimator: sample JSON on stdin, BodyParams JSON on stdout."""

    def __init__(self, command: str):
        self.command = command
        self.argv = shlex.split(command)

    def __call__(self, sample: SampleRecord, rng=None) -> BodyParams:
        del rng
        try:
            proc = subprocess.run(
                self.argv,
                input=json.dumps(sample.to_dict()),
                capture_output=True,
                text=True,
                timeout=120,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise EstimatorError(f"estimator process failed: {exc}") from exc
        if proc.returncode != 0:
            raise EstimatorError(
                f"estimator exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        try:
            return params_from_dict(json.loads(proc.stdout))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise EstimatorError(f"estimator produced invalid BodyParams: {exc}") from exc


def make_estimator(name: str):
    if name == "passthrough":
        return passthrough_estimator
    if name == "crop-naive":
        return crop_naive_estimator
    if name.startswith("exec:"):
        return ExecEstimator(name[len("exec:") :])
    raise ValueError(f"unknown estimator '{name}'")


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def lift_to_crop_frame(points3d, cam: Camera) -> np.ndarray:
    """Weak-perspective lift: (s X + t_x, s Y + t_y, s Z)."""
    pts = np.asarray(points3d, dtype=np.float64).reshape(-1, 3)
    out = cam.s * pts
    out[:, :2] += cam.t
    return out


def _sample_metrics(
    template: BodyModelTemplate,
    gt: SampleRecord,
    pred: BodyParams,
    wanted,
) -> dict:
    verts_pred, joints_pred = forward(template, pred)
    root = joints_pred[0].copy()
    verts_pred -= root
    joints_pred -= root
    gt_verts, gt_joints_fk = forward(template, gt.params)
    gt_root = gt_joints_fk[0].copy()
    gt_verts -= gt_root

    cam_pred, cam_gt = pred.camera, gt.params.camera
    out = {}
    if {"mpjpe", "pa_mpjpe"} & wanted:
        k_pred = lift_to_crop_frame(joints_pred, cam_pred)
        k_gt = lift_to_crop_frame(gt.keypoints3d, cam_gt)
        if "mpjpe" in wanted:
            out["mpjpe"] = float(
                np.mean(np.linalg.norm(k_pred - k_gt, axis=1)) * metrics_mod.MM_PER_METER
            )
        if "pa_mpjpe" in wanted:
            out["pa_mpjpe"] = metrics_mod.pa_mpjpe(k_pred, k_gt)
    if {"pve", "pa_pve"} & wanted:
        v_pred = lift_to_crop_frame(verts_pred, cam_pred)
        v_gt = lift_to_crop_frame(gt_verts, cam_gt)
        if "pve" in wanted:
            out["pve"] = float(
                np.mean(np.linalg.norm(v_pred - v_gt, axis=1)) * metrics_mod.MM_PER_METER
            )
        if "pa_pve" in wanted:
            out["pa_pve"] = metrics_mod.pa_pve(v_pred, v_gt)
    if "pvE2d" in wanted:
        size = gt.image.shape[0]
        p_pred = (project(verts_pred, cam_pred) + 1.0) * 0.5 * size
        p_gt = (project(gt_verts, cam_gt) + 1.0) * 0.5 * size
        out["pvE2d"] = float(np.mean(np.linalg.norm(p_pred - p_gt, axis=1)))
    if "iou" in wanted and gt.bbox_groups:
        size = gt.image.shape[0]
        kp_pred = (project(joints_pred, cam_pred) + 1.0) * 0.5 * size
        ious = []
        for name, idx in gt.bbox_groups.items():
            if name not in gt.part_bboxes:
                continue
            try:
                box_pred = derive_part_bbox(kp_pred[list(idx)], pad=gt.bbox_pad)
            except ValueError:
                ious.append(0.0)
                continue
            ious.append(metrics_mod.bbox_iou(box_pred, gt.part_bboxes[name]))
        if ious:
            out["iou"] = float(np.mean(ious))
    return out


def _cell_rng(seed: int, kind: str, magnitude: float, sample_idx: int):
    mag_bits = int(np.float64(magnitude).view(np.uint64))
    kind_idx = KINDS.index(kind)
    return np.random.default_rng(
        np.random.SeedSequence([seed, kind_idx, mag_bits, sample_idx])
    )


def run_sweep(
    estimator,
    dataset,
    grids,
    metric_names,
    template: BodyModelTemplate,
    seed: int = 0,
    jobs: int = 1,
) -> MetricReport:
    """Evaluate an estimator over augmentation grids.

    ``grids`` maps kind -> list of AugmentationSpec (see sweep_grid).  Each
    (kind, magnitude) cell augments every dataset sample, runs the estimator,
    and aggregates per-metric means; failed samples are skipped and counted.
    Cells are independent, deterministic given the seed, and may run in
    parallel.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if not grids:
        raise ValueError("grids must be non-empty")
    wanted = set(metric_names)
    unknown = wanted - set(SWEEP_METRICS)
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")

    cells = [(kind, spec) for kind, specs in grids.items() for spec in specs]

    def eval_cell(cell):
        kind, spec = cell
        sums = {m: 0.0 for m in wanted}
        successes = 0
        failures = 0
        for i, sample in enumerate(dataset):
            augmented = apply_full(sample, spec)
            rng = _cell_rng(seed, kind, spec.magnitude, i)
            try:
                pred = estimator(augmented, rng)
            except EstimatorError:
                failures += 1
                continue
            values = _sample_metrics(template, augmented, pred, wanted)
            for m, v in values.items():
                sums[m] += v
            successes += 1
        rows = []
        if successes:
            for m in metric_names:
                rows.append(
                    {
                        "kind": kind,
                        "magnitude": spec.magnitude,
                        "metric": m,
                        "value": sums[m] / successes,
                        "n": successes,
                    }
                )
        return rows, failures

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(eval_cell, cells))
    else:
        results = [eval_cell(cell) for cell in cells]

    report = MetricReport()
    total_failures = 0
    for rows, failures in results:
        report.rows.extend(rows)
        total_failures += failures
    report.metadata = {
        "seed": seed,
        "template_id": template_id(template),
        "estimator_id": getattr(estimator, "__name__", None)
        or getattr(estimator, "command", estimator.__class__.__name__),
        "failures": total_failures,
    }
    return report


def template_id(template: BodyModelTemplate) -> str:
    digest = hashlib.sha1()
    for arr in (
        template.template_vertices,
        template.joint_regressor,
        template.skinning_weights,
        template.parents,
    ):
        digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()[:12]


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------


def emit_report(report: MetricReport, fmt: str, path) -> None:
    """Write a report; CSV columns are exactly kind,magnitude,metric,value,n."""
    seen = set()
    for row in report.rows:
        key = (row["kind"], row["magnitude"], row["metric"])
        if key in seen:
            raise ValueError(f"duplicate report row {key}")
        seen.add(key)
        if not np.isfinite(row["value"]):
            raise ValueError(f"non-finite value in report row {key}")
    path = Path(path)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["kind", "magnitude", "metric", "value", "n"])
        for row in report.rows:
            writer.writerow(
                [
                    row["kind"],
                    f"{row['magnitude']:.6g}",
                    row["metric"],
                    f"{row['value']:.6g}",
                    row["n"],
                ]
            )
        path.write_text(buf.getvalue())
    elif fmt == "json":
        path.write_text(
            json.dumps({"metadata": report.metadata, "rows": report.rows}, indent=1)
        )
    else:
        raise ValueError(f"unknown report format '{fmt}'")


def load_report(path, fmt: str | None = None) -> MetricReport:
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix == ".json" else "csv"
    if fmt == "json":
        payload = json.loads(path.read_text())
        return MetricReport(rows=payload["rows"], metadata=payload.get("metadata", {}))
    report = MetricReport()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["kind", "magnitude", "metric", "value", "n"]:
            raise ValueError(f"unexpected CSV columns: {reader.fieldnames}")
        for row in reader:
            report.rows.append(
                {
                    "kind": row["kind"],
                    "magnitude": float(row["magnitude"]),
                    "metric": row["metric"],
                    "value": float(row["value"]),
                    "n": int(row["n"]),
                }
            )
    return report


# ---------------------------------------------------------------------------
# dataset persistence
# ---------------------------------------------------------------------------


def save_dataset(directory, samples, template: BodyModelTemplate, seed: int) -> None:
    from .body_model import save_template

    directory = Path(directory)
    (directory / "samples").mkdir(parents=True, exist_ok=True)
    save_template(template, directory / "template.rbmx")
    manifest = {
        "n": len(samples),
        "seed": seed,
        "template": "template.rbmx",
        "template_id": template_id(template),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))
    for i, sample in enumerate(samples):
        (directory / "samples" / f"{i:05d}.json").write_text(json.dumps(sample.to_dict()))


def load_dataset(directory):
    from .body_model import load_template

    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    template = load_template(directory / manifest["template"])
    samples = []
    for i in range(manifest["n"]):
        payload = json.loads((directory / "samples" / f"{i:05d}.json").read_text())
        samples.append(SampleRecord.from_dict(payload))
    return samples, template, manifest


def default_grids(kinds=KINDS, n_steps: int = 7) -> dict:
    return {kind: sweep_grid(kind, n_steps) for kind in kinds}
