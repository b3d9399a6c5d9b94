"""Sample records binding an image crop to its ground-truth annotations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .body_model import BodyParams
from .camera import Bbox, Camera, project


@dataclass
class SampleRecord:
    """One training/evaluation sample with mutually consistent ground truth.

    ``keypoints3d`` is root-centered (root joint at the origin, meters) and
    ``keypoints2d`` its weak-perspective projection in crop coordinates.
    ``part_bboxes`` live in the pixel frame of ``image``; ``bbox_groups``
    names the keypoint indices each box was derived from so boxes can be
    re-derived after geometric transforms.  ``provenance`` is an append-only
    list of applied augmentations, each entry recording the pre-transform
    camera and global orientation.
    """

    image: np.ndarray
    params: BodyParams
    keypoints2d: np.ndarray
    keypoints3d: np.ndarray
    part_seg: np.ndarray
    part_bboxes: dict = field(default_factory=dict)
    bbox_groups: dict = field(default_factory=dict)
    provenance: list = field(default_factory=list)
    part_count: int = 0
    bbox_pad: float = 0.2

    def __post_init__(self) -> None:
        self.image = np.asarray(self.image, dtype=np.float64)
        self.keypoints2d = np.asarray(self.keypoints2d, dtype=np.float64).reshape(-1, 2)
        self.keypoints3d = np.asarray(self.keypoints3d, dtype=np.float64).reshape(-1, 3)
        self.part_seg = np.asarray(self.part_seg)

    def validate(self, tol: float = 1e-9) -> None:
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError("image must be (H, W, 3)")
        if self.image.min() < 0.0 or self.image.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        reproj = project(self.keypoints3d, self.params.camera)
        err = np.abs(reproj - self.keypoints2d).max()
        if err > tol:
            raise ValueError(f"keypoints2d inconsistent with projection (err {err:.3g})")

    def copy(self) -> "SampleRecord":
        return SampleRecord(
            image=self.image.copy(),
            params=self.params.copy(),
            keypoints2d=self.keypoints2d.copy(),
            keypoints3d=self.keypoints3d.copy(),
            part_seg=self.part_seg.copy(),
            part_bboxes={k: Bbox(v.center.copy(), v.width, v.height) for k, v in self.part_bboxes.items()},
            bbox_groups={k: tuple(v) for k, v in self.bbox_groups.items()},
            provenance=[dict(entry) for entry in self.provenance],
            part_count=self.part_count,
            bbox_pad=self.bbox_pad,
        )

    def to_dict(self) -> dict:
        return {
            "image": self.image.tolist(),
            "params": params_to_dict(self.params),
            "keypoints2d": self.keypoints2d.tolist(),
            "keypoints3d": self.keypoints3d.tolist(),
            "part_seg": self.part_seg.tolist(),
            "part_bboxes": {
                name: {"center": box.center.tolist(), "width": box.width, "height": box.height}
                for name, box in self.part_bboxes.items()
            },
            "bbox_groups": {name: list(idx) for name, idx in self.bbox_groups.items()},
            "provenance": self.provenance,
            "part_count": self.part_count,
            "bbox_pad": self.bbox_pad,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SampleRecord":
        return cls(
            image=np.asarray(payload["image"], dtype=np.float64),
            params=params_from_dict(payload["params"]),
            keypoints2d=np.asarray(payload["keypoints2d"], dtype=np.float64),
            keypoints3d=np.asarray(payload["keypoints3d"], dtype=np.float64),
            part_seg=np.asarray(payload["part_seg"], dtype=np.int32),
            part_bboxes={
                name: Bbox(np.asarray(b["center"]), b["width"], b["height"])
                for name, b in payload.get("part_bboxes", {}).items()
            },
            bbox_groups={
                name: tuple(idx) for name, idx in payload.get("bbox_groups", {}).items()
            },
            provenance=list(payload.get("provenance", [])),
            part_count=int(payload.get("part_count", 0)),
            bbox_pad=float(payload.get("bbox_pad", 0.2)),
        )


def params_to_dict(params: BodyParams) -> dict:
    return {
        "global_orient": params.global_orient.tolist(),
        "pose": params.pose.tolist(),
        "shape": params.shape.tolist(),
        "expression": params.expression.tolist(),
        "camera": {"s": params.camera.s, "t": params.camera.t.tolist()},
    }


def params_from_dict(payload: dict) -> BodyParams:
    return BodyParams(
        global_orient=np.asarray(payload["global_orient"], dtype=np.float64),
        pose=np.asarray(payload["pose"], dtype=np.float64),
        shape=np.asarray(payload["shape"], dtype=np.float64),
        expression=np.asarray(payload.get("expression", []), dtype=np.float64),
        camera=Camera(payload["camera"]["s"], np.asarray(payload["camera"]["t"])),
    )
