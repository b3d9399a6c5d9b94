"""Parametric body-mesh engine: blendshapes, joint regression, and skinning.

The mesh convention follows the widely used SMPL-family layout: a rest-pose
template deformed by shape blendshapes, pose-corrective blendshapes driven by
``vec(R - I)`` of the non-root joint rotations, joints regressed from the
shaped template, and linear blend skinning over a kinematic tree whose root
is joint 0.  Model units are meters.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .camera import Camera
from .rotations import canonicalize_axis_angle, rodrigues

_MAGIC = b"RBMX1"


class TemplateError(ValueError):
    """Raised when a template file is malformed or violates an invariant."""


@dataclass(frozen=True)
class BodyModelTemplate:
    """Immutable rest-pose template plus the tensors that drive deformation.

    Shapes (V vertices, F faces, J joints, P parts, S shape coefficients):
      template_vertices (V, 3), faces (F, 3), shape_blendshapes (V, 3, S),
      pose_blendshapes (V, 3, 9*(J-1)), joint_regressor (J, V),
      skinning_weights (V, J), parents (J,) with -1 for the root,
      part_of_vertex (V,) with labels in [0, P).
    """

    template_vertices: np.ndarray
    faces: np.ndarray
    shape_blendshapes: np.ndarray
    pose_blendshapes: np.ndarray
    joint_regressor: np.ndarray
    skinning_weights: np.ndarray
    parents: np.ndarray
    part_of_vertex: np.ndarray
    part_count: int

    @property
    def vertex_count(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def joint_count(self) -> int:
        return self.joint_regressor.shape[0]

    @property
    def shape_count(self) -> int:
        return self.shape_blendshapes.shape[2]

    def validate(self) -> None:
        V, J, P = self.vertex_count, self.joint_count, self.part_count
        if self.template_vertices.shape != (V, 3):
            raise TemplateError("template_vertices must be (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise TemplateError("faces must be (F, 3)")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= V):
            raise TemplateError("faces: vertex index out of range")
        if self.shape_blendshapes.shape[:2] != (V, 3):
            raise TemplateError("shape_blendshapes must be (V, 3, S)")
        if self.pose_blendshapes.shape != (V, 3, 9 * (J - 1)):
            raise TemplateError("pose_blendshapes must be (V, 3, 9*(J-1))")
        if self.joint_regressor.shape != (J, V):
            raise TemplateError("joint_regressor must be (J, V)")
        row_sums = self.joint_regressor.sum(axis=1)
        if not np.allclose(row_sums, 1.0, atol=1e-6):
            raise TemplateError(
                f"joint_regressor: row {int(np.argmax(np.abs(row_sums - 1)))} "
                f"sums to {row_sums[np.argmax(np.abs(row_sums - 1))]:.6g}, expected 1"
            )
        if self.skinning_weights.shape != (V, J):
            raise TemplateError("skinning_weights must be (V, J)")
        if np.any(self.skinning_weights < -1e-12):
            raise TemplateError("skinning_weights: negative weight")
        w_sums = self.skinning_weights.sum(axis=1)
        if not np.allclose(w_sums, 1.0, atol=1e-6):
            raise TemplateError(
                f"skinning_weights: row {int(np.argmax(np.abs(w_sums - 1)))} "
                f"sums to {w_sums[np.argmax(np.abs(w_sums - 1))]:.6g}, expected 1"
            )
        if self.parents.shape != (J,):
            raise TemplateError("parents must be (J,)")
        roots = np.flatnonzero(self.parents < 0)
        if roots.size != 1 or roots[0] != 0:
            raise TemplateError("parents: exactly one root required, at index 0")
        if np.any(self.parents[1:] >= np.arange(1, J)):
            raise TemplateError("parents: parent index must precede child")
        if self.part_of_vertex.shape != (V,):
            raise TemplateError("part_of_vertex must be (V,)")
        if self.part_of_vertex.size and (
            self.part_of_vertex.min() < 0 or self.part_of_vertex.max() >= P
        ):
            raise TemplateError("part_of_vertex: label out of range")


@dataclass
class BodyParams:
    """Pose, shape, expression, and camera parameters of one sample.

    ``global_orient`` and each row of ``pose`` are axis-angle (radians);
    ``pose`` has one row per non-root joint.  ``expression`` is carried for
    parameter losses but does not deform the mesh (templates here carry no
    expression blendshapes).
    """

    global_orient: np.ndarray
    pose: np.ndarray
    shape: np.ndarray
    camera: Camera
    expression: np.ndarray = field(default_factory=lambda: np.zeros(10))

    def __post_init__(self) -> None:
        self.global_orient = np.asarray(self.global_orient, dtype=np.float64).reshape(3)
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(-1, 3)
        self.shape = np.asarray(self.shape, dtype=np.float64).reshape(-1)
        self.expression = np.asarray(self.expression, dtype=np.float64).reshape(-1)
        if not (
            np.all(np.isfinite(self.global_orient))
            and np.all(np.isfinite(self.pose))
            and np.all(np.isfinite(self.shape))
        ):
            raise ValueError("BodyParams must be finite")

    def canonicalized(self) -> "BodyParams":
        """Copy with every axis-angle wrapped to norm <= pi."""
        return BodyParams(
            global_orient=canonicalize_axis_angle(self.global_orient),
            pose=np.stack([canonicalize_axis_angle(r) for r in self.pose])
            if len(self.pose)
            else self.pose.copy(),
            shape=self.shape.copy(),
            camera=Camera(self.camera.s, self.camera.t.copy()),
            expression=self.expression.copy(),
        )

    def copy(self) -> "BodyParams":
        return BodyParams(
            global_orient=self.global_orient.copy(),
            pose=self.pose.copy(),
            shape=self.shape.copy(),
            camera=Camera(self.camera.s, self.camera.t.copy()),
            expression=self.expression.copy(),
        )


def regress_joints(vertices, regressor) -> np.ndarray:
    """Joint locations as convex combinations of vertices: regressor @ vertices."""
    vertices = np.asarray(vertices, dtype=np.float64)
    regressor = np.asarray(regressor, dtype=np.float64)
    if regressor.shape[1] != vertices.shape[0]:
        raise ValueError(
            f"regressor has {regressor.shape[1]} columns but got {vertices.shape[0]} vertices"
        )
    return regressor @ vertices


def forward(template: BodyModelTemplate, params: BodyParams):
    """Pose the template; returns (vertices (V, 3), joints (J, 3)).

    Steps: shape blendshapes, joint regression on the shaped mesh, pose
    blendshapes from vec(R - I) of the non-root rotations, then linear blend
    skinning.  The root rotates about its own rest location, so zero pose and
    shape reproduce the template exactly.
    """
    J = template.joint_count
    if params.pose.shape != (J - 1, 3):
        raise ValueError(f"pose must be ({J - 1}, 3), got {params.pose.shape}")
    if params.shape.shape != (template.shape_count,):
        raise ValueError(
            f"shape must have {template.shape_count} coefficients, got {params.shape.shape[0]}"
        )

    v_shaped = template.template_vertices + template.shape_blendshapes @ params.shape
    joints_rest = template.joint_regressor @ v_shaped

    rots = np.empty((J, 3, 3))
    rots[0] = rodrigues(params.global_orient)
    for i in range(1, J):
        rots[i] = rodrigues(params.pose[i - 1])

    pose_feature = (rots[1:] - np.eye(3)).reshape(-1)
    v_posed = v_shaped + template.pose_blendshapes @ pose_feature

    # world transform per joint, chained down the tree
    G = np.empty((J, 4, 4))
    G[0] = _rigid(rots[0], joints_rest[0])
    for i in range(1, J):
        local = _rigid(rots[i], joints_rest[i] - joints_rest[template.parents[i]])
        G[i] = G[template.parents[i]] @ local
    joints_posed = G[:, :3, 3].copy()

    # remove each joint's rest position so rest pose maps to the identity
    A = G.copy()
    A[:, :3, 3] -= np.einsum("jab,jb->ja", G[:, :3, :3], joints_rest)

    T = np.einsum("vj,jab->vab", template.skinning_weights, A)
    vertices = (
        np.einsum("vab,vb->va", T[:, :3, :3], v_posed) + T[:, :3, 3]
    )
    return vertices, joints_posed


def _rigid(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    M = np.eye(4)
    M[:3, :3] = R
    M[:3, 3] = t
    return M


# ---------------------------------------------------------------------------
# template I/O: "RBMX1" binary container with a JSON mirror for fixtures
# ---------------------------------------------------------------------------

_FLOAT_FIELDS = (
    "template_vertices",
    "shape_blendshapes",
    "pose_blendshapes",
    "joint_regressor",
    "skinning_weights",
)
_INT_FIELDS = ("faces", "parents", "part_of_vertex")


def save_template(template: BodyModelTemplate, path) -> None:
    """Write a template; '.json' paths use the JSON mirror, else binary."""
    template.validate()
    path = str(path)
    if path.endswith(".json"):
        payload = {name: getattr(template, name).tolist() for name in _FLOAT_FIELDS}
        payload.update({name: getattr(template, name).tolist() for name in _INT_FIELDS})
        payload["part_count"] = template.part_count
        with open(path, "w") as fh:
            json.dump(payload, fh)
        return
    V = template.vertex_count
    F = template.faces.shape[0]
    J = template.joint_count
    S = template.shape_count
    pose_width = 9 * (J - 1)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<6i", V, F, J, template.part_count, S, pose_width))
        for name in _FLOAT_FIELDS:
            fh.write(np.ascontiguousarray(getattr(template, name), dtype="<f8").tobytes())
        for name in _INT_FIELDS:
            fh.write(np.ascontiguousarray(getattr(template, name), dtype="<i4").tobytes())


def load_template(path) -> BodyModelTemplate:
    """Read a template written by :func:`save_template`; validates invariants."""
    path = str(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if path.endswith(".json") or blob[:1] == b"{":
        return _load_json(blob, path)
    if blob[: len(_MAGIC)] != _MAGIC:
        raise TemplateError(f"{path}: bad magic, expected {_MAGIC!r}")
    header_end = len(_MAGIC) + 24
    if len(blob) < header_end:
        raise TemplateError(f"{path}: truncated header")
    V, F, J, P, S, pose_width = struct.unpack("<6i", blob[len(_MAGIC) : header_end])
    if min(V, J) < 1 or F < 0 or P < 1 or S < 0:
        raise TemplateError(f"{path}: nonsensical header counts {V, F, J, P, S}")
    if pose_width != 9 * (J - 1):
        raise TemplateError(f"{path}: pose-blend width {pose_width} != 9*(J-1)")
    shapes = {
        "template_vertices": (V, 3),
        "shape_blendshapes": (V, 3, S),
        "pose_blendshapes": (V, 3, pose_width),
        "joint_regressor": (J, V),
        "skinning_weights": (V, J),
        "faces": (F, 3),
        "parents": (J,),
        "part_of_vertex": (V,),
    }
    offset = header_end
    arrays = {}
    for name in _FLOAT_FIELDS:
        arrays[name], offset = _take(blob, offset, shapes[name], "<f8", name, path)
    for name in _INT_FIELDS:
        arrays[name], offset = _take(blob, offset, shapes[name], "<i4", name, path)
    template = BodyModelTemplate(part_count=P, **arrays)
    template.validate()
    return template


def _take(blob, offset, shape, dtype, name, path):
    count = int(np.prod(shape))
    nbytes = count * np.dtype(dtype).itemsize
    if offset + nbytes > len(blob):
        raise TemplateError(f"{path}: truncated while reading field '{name}'")
    arr = np.frombuffer(blob[offset : offset + nbytes], dtype=dtype).reshape(shape)
    return arr.astype(np.int32 if dtype == "<i4" else np.float64), offset + nbytes


def _load_json(blob: bytes, path: str) -> BodyModelTemplate:
    try:
        payload = json.loads(blob.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise TemplateError(f"{path}: invalid JSON template: {exc}") from exc
    kwargs = {}
    for name in _FLOAT_FIELDS + _INT_FIELDS + ("part_count",):
        if name not in payload:
            raise TemplateError(f"{path}: missing field '{name}'")
        kwargs[name] = payload[name]
    for name in _FLOAT_FIELDS:
        kwargs[name] = np.asarray(kwargs[name], dtype=np.float64)
    for name in _INT_FIELDS:
        kwargs[name] = np.asarray(kwargs[name], dtype=np.int32)
    template = BodyModelTemplate(**kwargs)
    template.validate()
    return template


# ---------------------------------------------------------------------------
# synthetic templates (licensed body-model assets cannot ship)
# ---------------------------------------------------------------------------


def make_synthetic_template(
    joint_count: int = 6,
    ring_size: int = 8,
    shape_count: int = 4,
    part_count: int | None = None,
    seed: int = 0,
    bone_length: float = 0.12,
    limb_length: int = 2,
    radius_scale: float = 0.8,
) -> BodyModelTemplate:
    """Build a star-limbed test template: limbs of ``limb_length`` joints
    radiate from the root, so the mesh stays centered on the root joint.

    Each joint carries a vertex ring perpendicular to its bone; rings are
    triangulated into tubes along each limb, V = joint_count * ring_size.
    Skinning blends each ring between its joint and the parent, so the mesh
    articulates smoothly and all invariants hold by construction.
    """
    if joint_count < 2:
        raise ValueError("need at least 2 joints")
    rng = np.random.default_rng(seed)
    J, R = joint_count, ring_size
    V = J * R
    P = part_count if part_count is not None else J

    parents = np.full(J, -1, dtype=np.int32)
    for i in range(1, J):
        parents[i] = 0 if (i - 1) % limb_length == 0 else i - 1

    n_limbs = int(np.ceil((J - 1) / limb_length))
    limb_dirs = []
    for k in range(max(n_limbs, 1)):
        az = 2.0 * np.pi * k / max(n_limbs, 1)
        el = 0.35 * (1 if k % 2 else -1)
        limb_dirs.append(
            np.array([np.cos(az) * np.cos(el), np.sin(az) * np.cos(el), np.sin(el)])
        )

    joints_rest = np.zeros((J, 3))
    for i in range(1, J):
        direction = limb_dirs[(i - 1) // limb_length]
        joints_rest[i] = joints_rest[parents[i]] + bone_length * direction

    radius = radius_scale * bone_length
    angles = 2.0 * np.pi * np.arange(R) / R
    verts = np.empty((V, 3))
    for j in range(J):
        direction = np.array([0.0, 1.0, 0.0]) if j == 0 else limb_dirs[(j - 1) // limb_length]
        u = np.cross(direction, np.array([0.0, 0.0, 1.0]))
        if np.linalg.norm(u) < 1e-6:
            u = np.cross(direction, np.array([1.0, 0.0, 0.0]))
        u /= np.linalg.norm(u)
        w = np.cross(direction, u)
        ring = radius * (np.outer(np.cos(angles), u) + np.outer(np.sin(angles), w))
        verts[j * R : (j + 1) * R] = joints_rest[j] + ring

    faces = []
    for j in range(1, J):
        a, b = parents[j] * R, j * R
        for k in range(R):
            k2 = (k + 1) % R
            faces.append([a + k, a + k2, b + k])
            faces.append([a + k2, b + k2, b + k])
    faces = np.asarray(faces, dtype=np.int32)

    weights = np.zeros((V, J))
    for j in range(J):
        sl = slice(j * R, (j + 1) * R)
        if j == 0:
            weights[sl, 0] = 1.0
        else:
            weights[sl, j] = 0.7
            weights[sl, parents[j]] = 0.3

    regressor = np.zeros((J, V))
    for j in range(J):
        regressor[j, j * R : (j + 1) * R] = 1.0 / R  # ring centroid == joint

    shape_bs = 0.02 * bone_length * rng.standard_normal((V, 3, shape_count))
    pose_bs = 0.002 * bone_length * rng.standard_normal((V, 3, 9 * (J - 1)))

    part_of_vertex = (np.arange(V) // R % P).astype(np.int32)

    template = BodyModelTemplate(
        template_vertices=verts,
        faces=faces,
        shape_blendshapes=shape_bs,
        pose_blendshapes=pose_bs,
        joint_regressor=regressor,
        skinning_weights=weights,
        parents=parents,
        part_of_vertex=part_of_vertex,
        part_count=P,
    )
    template.validate()
    return template
