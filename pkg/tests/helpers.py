"""Shared fixtures-as-functions for the test suite."""

import numpy as np

from robomesh.body_model import BodyModelTemplate, BodyParams
from robomesh.camera import Camera

from oracles import TWO_BONE_VERTS


def random_rotation_vector(rng, max_angle=np.pi * 0.999):
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    return direction * rng.uniform(0.0, max_angle)


def two_bone_template() -> BodyModelTemplate:
    """Four vertices rigidly split between two chained joints."""
    weights = np.array(
        [
            [1.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.0, 1.0],
        ]
    )
    regressor = np.array(
        [
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.5],
        ]
    )
    template = BodyModelTemplate(
        template_vertices=TWO_BONE_VERTS.copy(),
        faces=np.zeros((0, 3), dtype=np.int32),
        shape_blendshapes=np.zeros((4, 3, 1)),
        pose_blendshapes=np.zeros((4, 3, 9)),
        joint_regressor=regressor,
        skinning_weights=weights,
        parents=np.array([-1, 0], dtype=np.int32),
        part_of_vertex=np.zeros(4, dtype=np.int32),
        part_count=1,
    )
    template.validate()
    return template


def rest_params(template: BodyModelTemplate, cam_s: float = 1.0) -> BodyParams:
    return BodyParams(
        global_orient=np.zeros(3),
        pose=np.zeros((template.joint_count - 1, 3)),
        shape=np.zeros(template.shape_count),
        camera=Camera(cam_s),
    )


def random_params(template: BodyModelTemplate, rng, pose_scale: float = 0.5) -> BodyParams:
    return BodyParams(
        global_orient=random_rotation_vector(rng, pose_scale),
        pose=np.stack(
            [random_rotation_vector(rng, pose_scale) for _ in range(template.joint_count - 1)]
        ),
        shape=rng.normal(0, 0.5, template.shape_count),
        camera=Camera(rng.uniform(0.8, 1.2), rng.uniform(-0.1, 0.1, 2)),
    )
