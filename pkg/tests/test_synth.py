import math
from collections import Counter

import numpy as np
import pytest

from viewplan.geom import DEFAULT_INTRINSICS, geodesic_angle, project_trajectory
from viewplan.metrics import classify_shot, hmr
from viewplan.synth import (
    DISTANCES,
    MOVEMENTS,
    InfeasibleSpec,
    MalformedRecord,
    ShotSpec,
    bone_lengths,
    gen_camera,
    gen_motion,
    generate_dataset,
    make_sample,
    read_dataset,
    write_dataset,
)


def _distances(sample):
    return np.linalg.norm(sample.camera.translations - sample.motion.pelvis, axis=1)


class TestShotSpec:
    @pytest.mark.parametrize("field,value", [("movement", "dolly"), ("direction", "above"),
                                             ("elevation", "bird"), ("distance", "far")])
    def test_rejects_unknown_categories(self, field, value):
        kw = {"movement": "orbit", field: value}
        with pytest.raises(ValueError):
            ShotSpec(**kw)

    def test_rejects_short_shots(self):
        with pytest.raises(ValueError):
            ShotSpec("orbit", f=7)

    def test_labels(self):
        s = ShotSpec("crane", "back", "low-angle", "long")
        assert s.labels == {"viewpoint": "back+low-angle", "distance": "long", "movement": "crane"}


class TestGenMotion:
    def test_idle_stays_put(self):
        m = gen_motion("idle", 16, 8, 7)
        disp = np.linalg.norm(m.pelvis - m.pelvis[0], axis=1)
        assert disp.max() < 0.05

    def test_deterministic(self):
        a, b = gen_motion("walk", 16, 8, 7), gen_motion("walk", 16, 8, 7)
        assert a.joints.tobytes() == b.joints.tobytes()

    @pytest.mark.parametrize("kind", ["idle", "walk", "turn"])
    @pytest.mark.parametrize("seed", [0, 7, 99])
    def test_bone_lengths_constant(self, kind, seed):
        lengths = bone_lengths(gen_motion(kind, 24, 8, seed).joints)
        assert np.ptp(lengths, axis=0).max() < 1e-9

    @pytest.mark.parametrize("seed", range(6))
    def test_walk_speed(self, seed):
        m = gen_motion("walk", 16, 8.0, seed)
        dz = m.pelvis[-1, 2] - m.pelvis[0, 2]
        speed = dz / ((len(m) - 1) / m.fps)
        assert 0.5 <= speed <= 1.5

    def test_starts_at_origin(self):
        m = gen_motion("turn", 16, 8, 3)
        np.testing.assert_allclose(m.pelvis[0], 0.0, atol=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            gen_motion("run", 16)
        with pytest.raises(ValueError):
            gen_motion("walk", 7)


class TestGenCamera:
    @pytest.mark.parametrize("seed", range(5))
    def test_orbit_medium(self, seed):
        s = make_sample(ShotSpec("orbit", "front", "eye-level", "medium", seed=seed))
        d = _distances(s)
        assert d.min() >= 2.0 and d.max() <= 4.0
        assert d.max() / d.min() <= 1.05
        rel = s.camera.translations - s.motion.pelvis
        sweep = np.unwrap(np.arctan2(rel[:, 0], rel[:, 2]))
        assert math.degrees(abs(sweep[-1] - sweep[0])) >= 60.0

    @pytest.mark.parametrize("seed", range(5))
    def test_static_eye_level(self, seed):
        s = make_sample(ShotSpec("static", "side", "eye-level", "medium", seed=seed))
        cam = s.camera
        assert np.linalg.norm(cam.translations - cam.translations[0], axis=1).max() < 0.05
        assert math.degrees(geodesic_angle(cam.rotations, cam.rotations[0]).max()) < 1.0
        assert np.all(np.abs(cam.translations[:, 1] - s.motion.pelvis[:, 1]) < 0.5)

    @pytest.mark.parametrize("seed", range(5))
    def test_push_in_shrinks_distance(self, seed):
        d = _distances(make_sample(ShotSpec("push-in", "front", "high-angle", "close-up", seed=seed)))
        assert d[0] / d[-1] >= 1 / 0.7

    @pytest.mark.parametrize("seed", range(5))
    def test_pull_out_grows_distance(self, seed):
        d = _distances(make_sample(ShotSpec("pull-out", "back", "eye-level", "long", seed=seed)))
        assert d[-1] / d[0] >= 1 / 0.7

    def test_pelvis_in_central_third(self, small_dataset):
        K = DEFAULT_INTRINSICS
        for s in small_dataset:
            uv, vis = project_trajectory(s.motion.pelvis[:, None], s.camera, K)
            assert vis.all()
            assert np.all(np.abs(uv[:, 0, 0] - K.cx) < K.width_px / 6)
            assert np.all(np.abs(uv[:, 0, 1] - K.cy) < K.height_px / 6)

    @pytest.mark.parametrize("dist", DISTANCES)
    def test_distance_class_by_mean(self, dist):
        bins = {"close-up": (0, 2), "medium": (2, 4), "long": (4, np.inf)}
        for seed in range(3):
            d = _distances(make_sample(ShotSpec("orbit", "side", "eye-level", dist, seed=seed))).mean()
            lo, hi = bins[dist]
            assert lo <= d < hi

    def test_frame_count_mismatch_is_infeasible(self):
        with pytest.raises(InfeasibleSpec):
            gen_camera(ShotSpec("orbit", f=16), gen_motion("idle", 12))

    def test_fixed_camera_on_walker_is_infeasible(self):
        with pytest.raises(InfeasibleSpec):
            gen_camera(ShotSpec("static", "side", "eye-level", "close-up", f=48, seed=1),
                       gen_motion("walk", 48, 8.0, 1))


class TestMakeSample:
    def test_observations_are_projection(self, small_dataset):
        for s in small_dataset:
            uv, vis = project_trajectory(s.motion.joints, s.camera)
            assert np.array_equal(uv, s.obs2d)
            assert np.array_equal(vis, s.vis)

    def test_deterministic(self):
        spec = ShotSpec("tracking", "side", "high-angle", "medium", seed=11)
        a, b = make_sample(spec), make_sample(spec)
        assert a.motion.joints.tobytes() == b.motion.joints.tobytes()
        assert a.camera.to_9d().tobytes() == b.camera.to_9d().tobytes()
        assert a.obs2d.tobytes() == b.obs2d.tobytes()
        assert a.prompt == b.prompt

    def test_prompt_template(self):
        s = make_sample(ShotSpec("orbit", "back", "low-angle", "long", seed=4))
        assert s.prompt.startswith("A person ")
        assert "orbits the subject" in s.prompt and "back low-angle long shot" in s.prompt

    def test_frame_counts_agree(self, small_dataset):
        for s in small_dataset:
            assert len(s.camera) == len(s.motion) == s.obs2d.shape[0] == s.spec.f

    def test_label_histogram_uniform(self):
        ds = generate_dataset(105, seed=8)
        counts = Counter(s.labels["movement"] for s in ds)
        assert set(counts) == set(MOVEMENTS)
        assert set(counts.values()) == {15}

    def test_dataset_order_independent(self):
        ds = generate_dataset(6, seed=2)
        again = generate_dataset(6, seed=2)
        for a, b in zip(ds, again):
            assert a.camera.to_9d().tobytes() == b.camera.to_9d().tobytes()


class TestGeneratorClassifierConsistency:
    def test_labels_recovered(self):
        ds = generate_dataset(140, seed=21)
        hits = {"viewpoint": 0, "distance": 0, "movement": 0}
        for s in ds:
            got = classify_shot(s.camera, s.motion)
            for key in hits:
                hits[key] += got[key] == s.labels[key]
        for key, n in hits.items():
            assert n / len(ds) >= 0.95, (key, n)

    def test_subject_always_framed(self, small_dataset):
        for s in small_dataset:
            assert hmr(s.camera, s.motion) == 0.0


class TestDatasetIO:
    def test_round_trip(self, small_dataset, tmp_path):
        p = tmp_path / "d.jsonl"
        write_dataset(small_dataset[:10], p, seed=3)
        back = read_dataset(p)
        assert len(back) == 10
        for a, b in zip(small_dataset, back):
            np.testing.assert_allclose(b.motion.joints, a.motion.joints, atol=1e-9)
            np.testing.assert_allclose(b.camera.translations, a.camera.translations, atol=1e-9)
            np.testing.assert_allclose(b.camera.rotations, a.camera.rotations, atol=1e-9)
            np.testing.assert_allclose(b.obs2d, a.obs2d, atol=1e-9 * 1e3)
            assert np.array_equal(a.vis, b.vis)
            assert a.labels == b.labels and a.prompt == b.prompt and a.kind == b.kind

    def test_one_record_per_line(self, small_dataset, tmp_path):
        p = tmp_path / "d.jsonl"
        write_dataset(small_dataset[:4], p)
        assert len(p.read_text().splitlines()) == 5  # header plus records

    def test_truncated_line(self, small_dataset, tmp_path):
        p = tmp_path / "d.jsonl"
        write_dataset(small_dataset[:3], p)
        text = p.read_text()
        p.write_text(text[: len(text) - 40])
        with pytest.raises(MalformedRecord) as exc:
            read_dataset(p)
        assert exc.value.line == 4

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.jsonl"
        p.write_text("")
        assert read_dataset(p) == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_dataset(tmp_path / "nope.jsonl")
