"""Acceptance suite: every criterion prints one line and pins its tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; the whole module targets well under five minutes on one core.
"""

import functools

import numpy as np

from robomesh.augmentation import (
    IDENTITY_MAGNITUDE,
    IMAGE_VARIANT,
    KINDS,
    LOCATION_VARIANT,
    POSE_VARIANT,
    AugmentationSpec,
    apply_full,
    classify,
    geometric_affine,
    sweep_grid,
)
from robomesh.body_model import BodyParams, forward, make_synthetic_template
from robomesh.camera import Bbox, Camera, derive_part_bbox, project
from robomesh.contrastive import ContrastiveConfig, Representation, contrastive_loss, pair_distance
from robomesh.harness import (
    crop_naive_estimator,
    default_grids,
    gen_dataset,
    passthrough_estimator,
    run_sweep,
)
from robomesh.localization import HeatVolume, gaussian_heatmap, soft_argmax3d
from robomesh.metrics import bbox_iou, mpjpe, pa_mpjpe, procrustes_align
from robomesh.rendering import (
    accumulate_vertex_grad,
    projected_silhouette_loss,
    rasterize_parts,
    silhouette_camera_fit,
    soft_silhouette,
)
from robomesh.rotations import rodrigues, rot6d_to_rotmat, rotmat_to_axis_angle, rotmat_to_rot6d

from helpers import random_rotation_vector, rest_params, two_bone_template
from oracles import (
    TWO_BONE_BENT_JOINTS,
    TWO_BONE_BENT_VERTS,
    brute_force_labels,
    central_difference,
    contrastive_double_loop,
)


def criterion(num, description):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\n[FAIL] criterion {num:2d}: {description}")
                raise
            print(f"\n[PASS] criterion {num:2d}: {description}")

        return wrapper

    return decorate


@criterion(1, "hard rasterizer identical to brute-force oracle on 50 random meshes")
def test_criterion_1_rasterizer_oracle():
    rng = np.random.default_rng(101)
    for _ in range(50):
        n_verts = int(rng.integers(6, 14))
        n_faces = int(rng.integers(4, 12))
        verts = rng.uniform(-0.95, 0.95, size=(n_verts, 2))
        depths = rng.uniform(0.5, 3.0, size=n_verts)
        faces = rng.integers(0, n_verts, size=(n_faces, 3))
        labels = rng.integers(0, 5, size=n_faces)
        ours = rasterize_parts(verts, depths, faces, labels, 64, 64, 5)
        reference = brute_force_labels(verts, depths, faces, labels, 64, 64, 5)
        differing = int((ours.labels != reference).sum())
        assert differing == 0, f"{differing} differing pixels"


@criterion(2, "analytic gradients match central finite differences (rel <= 1e-4)")
def test_criterion_2_gradient_verification():
    rng = np.random.default_rng(102)
    probes = 0

    # soft silhouette wrt vertex positions: 10 configs x 12 coordinates
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    for _ in range(10):
        verts = rng.uniform(-0.7, 0.7, size=(6, 2))
        weights = rng.normal(size=(24, 24))

        def objective(v):
            return float(
                (soft_silhouette(v, faces, 1.5, 24, 24).probability * weights).sum()
            )

        sil = soft_silhouette(verts, faces, 1.5, 24, 24)
        analytic = accumulate_vertex_grad(sil, weights, 6)
        numeric = central_difference(objective, verts, h=1e-5)
        rel = np.linalg.norm(numeric - analytic) / max(np.linalg.norm(numeric), 1e-12)
        assert rel <= 1e-4, rel
        probes += verts.size

    # silhouette loss wrt probabilities: 2 configs x 36 coordinates
    for _ in range(2):
        prob = rng.uniform(0.1, 0.9, size=(6, 6))
        mask = (rng.uniform(size=(6, 6)) > 0.5).astype(float)
        _, grad = projected_silhouette_loss(prob, mask)
        numeric = central_difference(
            lambda p: projected_silhouette_loss(p, mask)[0], prob, h=1e-6
        )
        rel = np.linalg.norm(numeric - grad) / max(np.linalg.norm(numeric), 1e-12)
        assert rel <= 1e-4, rel
        probes += prob.size

    # chained camera gradient: 12 configs x 3 coordinates
    hexagon = np.stack(
        [np.cos(np.linspace(0, 2 * np.pi, 7)[:-1]), np.sin(np.linspace(0, 2 * np.pi, 7)[:-1])],
        axis=1,
    )
    tri_faces = np.array([[0, i, i + 1] for i in range(1, 5)])
    for _ in range(12):
        verts3d = np.column_stack([hexagon * rng.uniform(0.3, 0.6), rng.uniform(0.5, 1.5, 6)])
        cam = Camera(rng.uniform(0.8, 1.3), rng.uniform(-0.1, 0.1, 2))
        mask = (rng.uniform(size=(24, 24)) > 0.5).astype(float)
        _, ds, dt = silhouette_camera_fit(verts3d, cam, tri_faces, mask, 1.5, 24, 24)

        def loss_at(vec):
            return silhouette_camera_fit(
                verts3d, Camera(vec[0], vec[1:]), tri_faces, mask, 1.5, 24, 24
            )[0]

        numeric = central_difference(loss_at, np.array([cam.s, cam.t[0], cam.t[1]]), h=1e-5)
        analytic = np.array([ds, dt[0], dt[1]])
        rel = np.linalg.norm(numeric - analytic) / max(np.linalg.norm(numeric), 1e-12)
        assert rel <= 1e-4, rel
        probes += 3

    assert probes >= 100, probes


@criterion(3, "Procrustes recovers 100 similarities exactly; PA <= unaligned error")
def test_criterion_3_procrustes_exactness():
    rng = np.random.default_rng(103)
    for _ in range(100):
        X = rng.normal(size=(10, 3))
        s0 = rng.uniform(0.3, 3.0)
        R0 = rodrigues(random_rotation_vector(rng))
        v0 = rng.normal(size=3)
        Y = s0 * X @ R0.T + v0
        assert pa_mpjpe(X, Y) <= 1e-9
        result = procrustes_align(X, Y)
        assert abs(result.scale - s0) <= 1e-8
        assert np.abs(result.rotation - R0).max() <= 1e-8
        assert np.abs(result.translation - v0).max() <= 1e-8
    for _ in range(100):
        pred = rng.normal(size=(8, 3))
        gt = pred + rng.normal(size=(8, 3)) * rng.uniform(0.01, 0.5)
        assert pa_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-9


@criterion(4, "contrastive loss matches brute force; zero-iff and 20-shuffle invariance")
def test_criterion_4_contrastive_oracle():
    rng = np.random.default_rng(104)
    cfg = ContrastiveConfig()

    def reps(n):
        return [Representation(kind="keypoints", vector=rng.normal(size=9)) for _ in range(n)]

    for n_pairs in (1, 2, 4, 8):
        preds = reps(2 * n_pairs)
        gts = reps(2 * n_pairs)
        pairs = [(i, i + n_pairs) for i in range(n_pairs)]
        total, _ = contrastive_loss(preds, gts, pairs, cfg)
        reference = contrastive_double_loop(
            [r.vector for r in preds],
            [r.vector for r in gts],
            pairs,
            cfg.tau_pos,
            cfg.resolved_tau_neg(n_pairs),
            lambda x, y: float(np.abs(x - y).mean()),
        )
        assert abs(total - reference) <= 1e-9

    # zero iff all predicted pairwise distances equal ground-truth ones
    gts = reps(6)
    shift = rng.normal(size=9)
    preds = [Representation(kind="keypoints", vector=g.vector + shift) for g in gts]
    pairs = [(0, 3), (1, 4), (2, 5)]
    zero_total, _ = contrastive_loss(preds, gts, pairs, cfg)
    assert zero_total <= 1e-12
    preds[2] = Representation(kind="keypoints", vector=preds[2].vector * 1.25)
    nonzero_total, _ = contrastive_loss(preds, gts, pairs, cfg)
    assert nonzero_total > 1e-9
    assert abs(pair_distance(gts[0], gts[1], cfg) - pair_distance(preds[0], preds[1], cfg)) <= 1e-12

    preds = reps(8)
    gts = reps(8)
    pairs = [(i, i + 4) for i in range(4)]
    base, _ = contrastive_loss(preds, gts, pairs, cfg)
    for _ in range(20):
        perm = rng.permutation(8)
        inv = np.empty(8, dtype=int)
        inv[perm] = np.arange(8)
        total, _ = contrastive_loss(
            [preds[i] for i in perm],
            [gts[i] for i in perm],
            [(inv[a], inv[b]) for a, b in pairs],
            cfg,
        )
        assert abs(total - base) <= 1e-9


@criterion(5, "augmentation ground-truth consistency (geometry 1e-9, image-variant bit-exact)")
def test_criterion_5_augmentation_gt_consistency():
    template = make_synthetic_template()
    samples = gen_dataset(template, 50, rng_seed=105)
    rng = np.random.default_rng(105)
    geometric = [
        k for k in KINDS
        if classify(AugmentationSpec(k, IDENTITY_MAGNITUDE[k])) != IMAGE_VARIANT
    ]
    for kind in geometric:
        lo, hi = (-0.25, 0.25) if kind != "rotation" else (-60.0, 60.0)
        for sample in samples:
            spec = AugmentationSpec(kind, float(rng.uniform(lo, hi)))
            out = apply_full(sample, spec)
            aff = geometric_affine(spec, 64, 64)
            lhs = aff.apply(project(sample.keypoints3d, sample.params.camera))
            rhs = project(out.keypoints3d, out.params.camera)
            assert np.abs(lhs - rhs).max() <= 1e-9, (kind, spec.magnitude)
            out.validate(tol=1e-9)
    image_kinds = [k for k in KINDS if classify(AugmentationSpec(k, IDENTITY_MAGNITUDE[k])) == IMAGE_VARIANT]
    for kind in image_kinds:
        lo, hi = (-0.5, 0.5) if kind != "low_resolution" else (1.0, 4.0)
        for sample in samples:
            spec = AugmentationSpec(kind, float(rng.uniform(lo, hi)))
            out = apply_full(sample, spec)
            assert np.array_equal(out.keypoints2d, sample.keypoints2d)
            assert np.array_equal(out.keypoints3d, sample.keypoints3d)
            assert np.array_equal(out.part_seg, sample.part_seg)
            assert np.array_equal(out.params.pose, sample.params.pose)
            assert np.array_equal(out.params.global_orient, sample.params.global_orient)
            assert out.params.camera.s == sample.params.camera.s
            assert np.array_equal(out.params.camera.t, sample.params.camera.t)


@criterion(6, "taxonomy partitions the ten kinds into the three published lists")
def test_criterion_6_taxonomy():
    image_variant = {"hue", "sharpness", "grayness", "contrast", "brightness", "low_resolution"}
    location_variant = {"translate_x", "translate_y", "scale"}
    pose_variant = {"rotation"}
    assert set(KINDS) == image_variant | location_variant | pose_variant
    for kind in KINDS:
        spec = AugmentationSpec(kind, IDENTITY_MAGNITUDE[kind])
        tag = classify(spec)
        if kind in image_variant:
            assert tag == IMAGE_VARIANT
        elif kind in location_variant:
            assert tag == LOCATION_VARIANT
        else:
            assert tag == POSE_VARIANT


@criterion(7, "sweep certificate: passthrough all-zero; crop-naive shape matches protocol")
def test_criterion_7_harness_certificate():
    template = make_synthetic_template()
    dataset = gen_dataset(template, 20, rng_seed=107)
    grids = default_grids(KINDS, n_steps=7)
    metric_names = ["mpjpe", "pa_mpjpe", "pve", "pa_pve", "pvE2d", "iou"]

    report = run_sweep(passthrough_estimator, dataset, grids, metric_names, template, seed=1)
    assert len(report.rows) == 10 * 7 * len(metric_names)
    for row in report.rows:
        err = 1.0 - row["value"] if row["metric"] == "iou" else row["value"]
        assert abs(err) <= 1e-6, row

    report = run_sweep(crop_naive_estimator, dataset, grids, ["mpjpe"], template, seed=1)
    for kind in ("translate_x", "translate_y", "scale"):
        series = report.series(kind, "mpjpe")
        mags = np.array([m for m, _ in series])
        vals = np.array([v for _, v in series])
        branch_pos = vals[mags >= 0]
        branch_neg = vals[mags <= 0][::-1]
        assert np.all(np.diff(branch_pos) > 0), (kind, series)
        assert np.all(np.diff(branch_neg) > 0), (kind, series)
    for kind in ("hue", "sharpness", "grayness", "contrast", "brightness", "low_resolution"):
        vals = [v for _, v in report.series(kind, "mpjpe")]
        assert all(abs(v - vals[0]) <= 1e-9 for v in vals), kind


@criterion(8, "soft-argmax recovers Gaussian peaks within 0.1 voxel; symmetry exact")
def test_criterion_8_soft_argmax_fidelity():
    rng = np.random.default_rng(108)
    dims = (32, 32, 32)
    for _ in range(200):
        center = rng.uniform(3.0, 28.0, size=(1, 3))  # >= 3 voxels from the boundary
        vol = gaussian_heatmap(center, dims, sigma=1.5)
        recovered = soft_argmax3d(vol, temperature=1.0)[0]
        assert np.abs(recovered - np.rint(center[0])).max() <= 0.1

    uniform = HeatVolume(np.zeros((1,) + dims))
    np.testing.assert_allclose(soft_argmax3d(uniform, 1.0)[0], [15.5, 15.5, 15.5], atol=1e-6)

    twin = np.full((1,) + dims, -40.0)
    twin[0, 0, 0, 0] = 40.0
    twin[0, 0, 0, 30] = 40.0
    np.testing.assert_allclose(soft_argmax3d(HeatVolume(twin), 1.0)[0], [0, 0, 15], atol=1e-6)


@criterion(9, "body model: rest identity, rotation equivariance, two-bone and rotation round trips")
def test_criterion_9_body_model_invariants():
    template = make_synthetic_template()
    rest = rest_params(template)
    verts, joints = forward(template, rest)
    assert np.abs(verts - template.template_vertices).max() <= 1e-12

    rng = np.random.default_rng(109)
    root = joints[0]
    for _ in range(50):
        r = random_rotation_vector(rng)
        params = rest_params(template)
        params.global_orient = r
        v_rot, j_rot = forward(template, params)
        expected = (verts - root) @ rodrigues(r).T
        assert np.abs((v_rot - j_rot[0]) - expected).max() <= 1e-9

    chain = two_bone_template()
    bent = BodyParams(
        global_orient=np.zeros(3),
        pose=np.array([[0.0, 0.0, np.pi / 2]]),
        shape=np.zeros(1),
        camera=Camera(1.0),
    )
    v_bent, j_bent = forward(chain, bent)
    assert np.abs(v_bent - TWO_BONE_BENT_VERTS).max() <= 1e-9
    assert np.abs(j_bent - TWO_BONE_BENT_JOINTS).max() <= 1e-9

    for _ in range(100):
        v = random_rotation_vector(rng)
        R = rodrigues(v)
        assert np.abs(rodrigues(rotmat_to_axis_angle(R)) - R).max() <= 1e-9
        assert np.abs(rot6d_to_rotmat(rotmat_to_rot6d(R)) - R).max() <= 1e-9


@criterion(10, "keypoint-box rule and IoU analytic cases are exact")
def test_criterion_10_bbox_behavior():
    box = derive_part_bbox(np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]]), pad=0.0)
    assert box.center[0] == 1.0 and box.center[1] == 1.0  # mean, not range midpoint
    assert box.width == 2.0 and box.height == 3.0
    padded = derive_part_bbox(np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]]), pad=0.5)
    assert padded.width == 3.0 and padded.height == 4.5
    assert np.array_equal(padded.center, box.center)

    unit = dict(width=1.0, height=1.0)
    assert bbox_iou(Bbox(center=[0, 0], **unit), Bbox(center=[0, 0], **unit)) == 1.0
    assert bbox_iou(Bbox(center=[0, 0], **unit), Bbox(center=[9, 9], **unit)) == 0.0
    assert bbox_iou(Bbox(center=[0, 0], **unit), Bbox(center=[0.5, 0], **unit)) == 1.0 / 3.0
