import json
import sys

import numpy as np
import pytest

from robomesh.augmentation import AugmentationSpec, sweep_grid
from robomesh.body_model import forward, make_synthetic_template
from robomesh.camera import derive_part_bbox, project
from robomesh.harness import (
    EstimatorError,
    ExecEstimator,
    LossWeights,
    MetricReport,
    crop_naive_estimator,
    default_grids,
    emit_report,
    gen_dataset,
    lift_to_crop_frame,
    load_dataset,
    load_report,
    make_estimator,
    passthrough_estimator,
    run_sweep,
    save_dataset,
    total_loss,
)
from robomesh.metrics import bbox_iou


@pytest.fixture(scope="module")
def template():
    return make_synthetic_template()


@pytest.fixture(scope="module")
def dataset(template):
    return gen_dataset(template, 4, rng_seed=5)


class TestTotalLoss:
    def test_all_zero_weights(self):
        weights = LossWeights(**{f"lambda_{t}": 0.0 for t in ("3d", "2d", "bm", "proj", "segm", "con", "box")})
        total, _ = total_loss({"3d": 1.0, "con": 2.0}, weights)
        assert total == 0.0

    def test_single_term(self):
        weights = LossWeights(lambda_3d=2.0)
        total, breakdown = total_loss({"3d": 3.0}, weights)
        assert breakdown["3d"] == pytest.approx(6.0)
        assert total == pytest.approx(6.0)  # all other terms default to 0

    def test_random_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        terms = {t: float(rng.uniform(0, 2)) for t in ("3d", "2d", "bm", "proj", "segm", "con", "box")}
        lam = {f"lambda_{t}": float(rng.uniform(0, 2)) for t in terms}
        weights = LossWeights(**lam)
        total, _ = total_loss(terms, weights)
        expected = sum(lam[f"lambda_{t}"] * v for t, v in terms.items())
        assert abs(total - expected) <= 1e-12

    def test_linearity_in_components(self):
        weights = LossWeights()
        t1, _ = total_loss({"3d": 1.0}, weights)
        t2, _ = total_loss({"3d": 2.5}, weights)
        assert t2 == pytest.approx(2.5 * t1)

    def test_negative_component_rejected(self):
        with pytest.raises(ValueError):
            total_loss({"3d": -0.1})

    def test_unknown_term_rejected(self):
        with pytest.raises(ValueError):
            total_loss({"style": 1.0})

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_2d=-1.0)


class TestGenDataset:
    def test_deterministic_bit_exact(self, template):
        a = gen_dataset(template, 3, rng_seed=11)
        b = gen_dataset(template, 3, rng_seed=11)
        for s, t in zip(a, b):
            assert np.array_equal(s.image, t.image)
            assert np.array_equal(s.keypoints3d, t.keypoints3d)
            assert np.array_equal(s.params.pose, t.params.pose)

    def test_every_sample_passes_invariants(self, dataset):
        for sample in dataset:
            sample.validate(tol=1e-9)
            assert np.array_equal(sample.keypoints3d[0], [0.0, 0.0, 0.0])

    def test_bbox_self_consistency_reprojection(self, template, dataset):
        # re-derive boxes from an independent forward+projection pass
        size = dataset[0].image.shape[0]
        for sample in dataset:
            verts, joints = forward(template, sample.params)
            joints = joints - joints[0]
            kp_pix = (project(joints, sample.params.camera) + 1.0) * 0.5 * size
            for name, idx in sample.bbox_groups.items():
                box = derive_part_bbox(kp_pix[list(idx)], pad=sample.bbox_pad)
                assert bbox_iou(box, sample.part_bboxes[name]) >= 0.99

    def test_dataset_round_trip_on_disk(self, template, dataset, tmp_path):
        save_dataset(tmp_path / "ds", dataset, template, seed=5)
        loaded, loaded_template, manifest = load_dataset(tmp_path / "ds")
        assert manifest["n"] == len(dataset)
        assert np.array_equal(loaded_template.template_vertices, template.template_vertices)
        for s, t in zip(loaded, dataset):
            assert np.abs(s.image - t.image).max() <= 1e-15
            np.testing.assert_allclose(s.keypoints2d, t.keypoints2d, atol=1e-15)
            s.validate(tol=1e-9)


class TestEstimators:
    def test_passthrough_echoes_params(self, dataset):
        out = passthrough_estimator(dataset[0])
        assert np.array_equal(out.pose, dataset[0].params.pose)
        assert out.camera.s == dataset[0].params.camera.s

    def test_crop_naive_rolls_back_camera(self, dataset):
        from robomesh.augmentation import apply_full

        augmented = apply_full(dataset[0], AugmentationSpec("translate_x", 0.2))
        naive = crop_naive_estimator(augmented)
        assert naive.camera.s == dataset[0].params.camera.s
        np.testing.assert_array_equal(naive.camera.t, dataset[0].params.camera.t)
        np.testing.assert_array_equal(naive.global_orient, dataset[0].params.global_orient)

    def test_exec_estimator_round_trip(self, dataset):
        # an external passthrough: parse the sample, emit its params back
        script = (
            "import json,sys; d=json.load(sys.stdin); json.dump(d['params'], sys.stdout)"
        )
        estimator = ExecEstimator(f"{sys.executable} -c \"{script}\"")
        out = estimator(dataset[0])
        assert np.allclose(out.pose, dataset[0].params.pose)
        assert out.camera.s == pytest.approx(dataset[0].params.camera.s)

    def test_exec_estimator_failure_raises(self, dataset):
        estimator = ExecEstimator(f"{sys.executable} -c \"import sys; sys.exit(3)\"")
        with pytest.raises(EstimatorError):
            estimator(dataset[0])

    def test_make_estimator_names(self):
        assert make_estimator("passthrough") is passthrough_estimator
        assert make_estimator("crop-naive") is crop_naive_estimator
        assert isinstance(make_estimator("exec:echo hi"), ExecEstimator)
        with pytest.raises(ValueError):
            make_estimator("magic")


class TestRunSweep:
    METRICS = ["mpjpe", "pa_mpjpe", "pve", "pa_pve", "pvE2d", "iou"]

    def test_passthrough_zero_certificate_subset(self, template, dataset):
        grids = {k: sweep_grid(k, 3) for k in ("translate_x", "rotation", "hue")}
        report = run_sweep(passthrough_estimator, dataset, grids, self.METRICS, template)
        for row in report.rows:
            err = 1.0 - row["value"] if row["metric"] == "iou" else row["value"]
            assert abs(err) <= 1e-6, row

    def test_crop_naive_monotone_for_location_variant(self, template, dataset):
        grids = {k: sweep_grid(k, 7) for k in ("translate_x", "scale")}
        report = run_sweep(crop_naive_estimator, dataset, grids, ["mpjpe"], template)
        for kind in grids:
            series = report.series(kind, "mpjpe")
            mags = np.array([m for m, _ in series])
            vals = np.array([v for _, v in series])
            pos = vals[mags >= 0]
            neg = vals[mags <= 0][::-1]
            assert np.all(np.diff(pos) > 0), (kind, series)
            assert np.all(np.diff(neg) > 0), (kind, series)

    def test_crop_naive_constant_for_image_variant(self, template, dataset):
        grids = {k: sweep_grid(k, 5) for k in ("hue", "brightness", "low_resolution")}
        report = run_sweep(crop_naive_estimator, dataset, grids, ["mpjpe", "pve"], template)
        for row in report.rows:
            assert abs(row["value"]) <= 1e-9

    def test_parallel_equals_serial(self, template, dataset):
        grids = {k: sweep_grid(k, 3) for k in ("translate_y", "contrast")}
        serial = run_sweep(crop_naive_estimator, dataset, grids, ["mpjpe", "iou"], template, jobs=1)
        parallel = run_sweep(crop_naive_estimator, dataset, grids, ["mpjpe", "iou"], template, jobs=4)
        key = lambda r: (r["kind"], r["magnitude"], r["metric"])
        assert sorted(serial.rows, key=key) == sorted(parallel.rows, key=key)

    def test_estimator_failures_flagged_and_run_continues(self, template, dataset):
        calls = {"n": 0}

        def flaky(sample, rng=None):
            calls["n"] += 1
            if calls["n"] % 2 == 0:
                raise EstimatorError("boom")
            return passthrough_estimator(sample)

        grids = {"hue": sweep_grid("hue", 3)}
        report = run_sweep(flaky, dataset, grids, ["mpjpe"], template)
        assert report.metadata["failures"] > 0
        for row in report.rows:
            assert row["n"] < len(dataset)

    def test_unknown_metric_rejected(self, template, dataset):
        with pytest.raises(ValueError):
            run_sweep(passthrough_estimator, dataset, default_grids(("hue",), 3), ["accuracy"], template)

    def test_lift_to_crop_frame(self):
        from robomesh.camera import Camera

        pts = np.array([[1.0, 2.0, 3.0]])
        out = lift_to_crop_frame(pts, Camera(2.0, [0.1, -0.1]))
        np.testing.assert_allclose(out, [[2.1, 3.9, 6.0]])


class TestReports:
    def make_report(self):
        return MetricReport(
            rows=[
                {"kind": "hue", "magnitude": -0.25, "metric": "mpjpe", "value": 1.234567891, "n": 4},
                {"kind": "hue", "magnitude": -0.25, "metric": "pve", "value": 0.123456789, "n": 4},
                {"kind": "scale", "magnitude": 0.5, "metric": "iou", "value": 0.75, "n": 4},
            ],
            metadata={"seed": 0, "template_id": "abc", "estimator_id": "passthrough", "failures": 0},
        )

    def test_csv_round_trip_within_tolerance(self, tmp_path):
        # six significant digits: half-ulp is 5e-6 relative, 1e-6 absolute below 0.2
        report = self.make_report()
        emit_report(report, "csv", tmp_path / "r.csv")
        text = (tmp_path / "r.csv").read_text()
        assert text.splitlines()[0] == "kind,magnitude,metric,value,n"
        loaded = load_report(tmp_path / "r.csv")
        for a, b in zip(loaded.rows, report.rows):
            assert a["kind"] == b["kind"] and a["metric"] == b["metric"] and a["n"] == b["n"]
            assert abs(a["value"] - b["value"]) <= 5e-6 * max(1.0, abs(b["value"]))
            if abs(b["value"]) < 0.2:
                assert abs(a["value"] - b["value"]) <= 1e-6
            assert abs(a["magnitude"] - b["magnitude"]) <= 1e-12

    def test_json_round_trip_exact(self, tmp_path):
        report = self.make_report()
        emit_report(report, "json", tmp_path / "r.json")
        loaded = load_report(tmp_path / "r.json")
        assert loaded.rows == report.rows
        assert loaded.metadata == report.metadata

    def test_empty_report_is_header_only(self, tmp_path):
        emit_report(MetricReport(), "csv", tmp_path / "empty.csv")
        assert (tmp_path / "empty.csv").read_text().strip() == "kind,magnitude,metric,value,n"

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(MetricReport(), "xml", tmp_path / "r.xml")
