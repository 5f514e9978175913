import math

import numpy as np
import pytest

from viewplan.geom import rotation_y
from viewplan.motion import (
    JOINT_NAMES,
    LEFT_HIP,
    PARENTS,
    PELVIS,
    RIGHT_HIP,
    CanonicalMotion,
    DegeneratePose,
    InvalidMotion,
    MotionSequence,
    canonicalize,
    forward_direction,
    read_motion,
    temporal_resample,
    write_motion,
)
from viewplan.synth import gen_motion


def _hips(left, right):
    frame = np.zeros((22, 3))
    frame[LEFT_HIP], frame[RIGHT_HIP] = left, right
    return frame


@pytest.fixture
def walk():
    return gen_motion("walk", f=16, seed=4)


def _perturb(m, yaw, t):
    return m.transformed(rotation_y(yaw), t)


class TestLayout:
    def test_joint_table(self):
        assert len(JOINT_NAMES) == 22
        assert JOINT_NAMES[:3] == ("pelvis", "left_hip", "right_hip")
        assert PARENTS[0] == -1 and all(0 <= p < j for j, p in enumerate(PARENTS) if j)


class TestForward:
    def test_left_at_plus_x_faces_minus_z(self):
        f = forward_direction(_hips([0.1, 0.9, 0], [-0.1, 0.9, 0]))
        np.testing.assert_allclose(f, [0, 0, -1])

    def test_yawed_body(self):
        f = forward_direction(_hips([0, 0.9, 0.1], [0, 0.9, -0.1]))
        np.testing.assert_allclose(f, [1, 0, 0])

    def test_unit_and_horizontal(self):
        f = forward_direction(_hips([0.3, 1.2, 0.1], [-0.1, 0.7, -0.2]))
        assert math.isclose(np.linalg.norm(f), 1.0) and f[1] == 0.0

    @pytest.mark.parametrize("left,right", [([0, 0.9, 0], [0, 0.9, 0]), ([0, 1.0, 0], [0, 0.8, 0])])
    def test_degenerate(self, left, right):
        with pytest.raises(DegeneratePose):
            forward_direction(_hips(left, right))


class TestValidation:
    def test_short(self):
        with pytest.raises(InvalidMotion):
            MotionSequence(np.zeros((3, 22, 3)))

    def test_nan(self, walk):
        j = walk.joints.copy()
        j[2, 5, 1] = np.nan
        with pytest.raises(InvalidMotion):
            MotionSequence(j)

    def test_pelvis_jump(self, walk):
        j = walk.joints.copy()
        j[5:] += [1.5, 0, 0]
        with pytest.raises(InvalidMotion):
            MotionSequence(j)

    def test_canonical_invariants_enforced(self, walk):
        with pytest.raises(InvalidMotion):
            CanonicalMotion(walk.joints + [0.5, 0, 0])


class TestCanonicalize:
    def test_idempotent(self, walk):
        c, tf = canonicalize(walk)
        assert tf.is_identity
        assert np.abs(c.joints - walk.joints).max() <= 1e-12

    def test_translation(self, walk):
        c, _ = canonicalize(MotionSequence(walk.joints + [3, 1, 2]))
        assert np.abs(c.joints - walk.joints).max() < 1e-12

    def test_yaw_and_translation(self, walk, rng):
        for _ in range(20):
            moved = _perturb(walk, rng.uniform(-math.pi, math.pi), rng.normal(size=3) * 5)
            c, tf = canonicalize(moved)
            assert np.abs(c.joints - walk.joints).max() < 1e-9
            np.testing.assert_allclose(tf.apply(moved.joints), c.joints, atol=1e-12)

    def test_frame0_conventions(self, walk):
        c, _ = canonicalize(_perturb(walk, 0.37 * math.pi, [1, 2, 3]))
        assert np.abs(c.joints[0, PELVIS]).max() <= 1e-9
        np.testing.assert_allclose(forward_direction(c.joints[0]), [0, 0, 1], atol=1e-9)

    def test_preserves_distances(self, walk):
        moved = _perturb(walk, 1.1, [0.3, 0.0, -4])
        c, _ = canonicalize(moved)
        d0 = np.linalg.norm(moved.joints[:, :, None] - moved.joints[:, None], axis=-1)
        d1 = np.linalg.norm(c.joints[:, :, None] - c.joints[:, None], axis=-1)
        assert np.abs(d0 - d1).max() < 1e-12


class TestResample:
    def test_lengths(self):
        assert temporal_resample(np.zeros((16, 2)), 4).shape == (4, 2)
        assert temporal_resample(np.zeros((17, 2)), 4).shape == (5, 2)

    def test_constant(self):
        x = np.full((10, 22, 3), 0.25)
        assert np.array_equal(temporal_resample(x, 3), np.full((4, 22, 3), 0.25))

    def test_window_means_brute_force(self, rng):
        x = rng.normal(size=(11, 5))
        out = temporal_resample(x, 4)
        expected = [x[0:4].mean(0), x[4:8].mean(0), x[8:11].mean(0)]
        np.testing.assert_allclose(out, expected, atol=1e-15)

    def test_linear_pelvis(self):
        t = np.arange(16.0)
        x = np.stack([0.1 * t, np.zeros(16), 0.05 * t], axis=1)
        out = temporal_resample(x, 4)
        np.testing.assert_allclose(out[:, 0], 0.1 * np.array([1.5, 5.5, 9.5, 13.5]), atol=1e-15)

    def test_commutes_with_rigid_transform(self, walk):
        moved = _perturb(walk, 0.8, [1, 0.5, -2])
        _, tf = canonicalize(moved)
        a = tf.apply(temporal_resample(moved, 4))
        b = temporal_resample(tf.apply(moved.joints), 4)
        assert np.abs(a - b).max() < 1e-12

    def test_bad_factor(self):
        with pytest.raises(ValueError):
            temporal_resample(np.zeros((4, 1)), 0)


class TestFile:
    def test_round_trip(self, walk, tmp_path):
        path = tmp_path / "m.json"
        write_motion(walk, path)
        back = read_motion(path)
        assert back.fps == walk.fps
        np.testing.assert_allclose(back.joints, walk.joints, rtol=1e-9, atol=1e-12)

    def test_rejects_wrong_layout(self, walk, tmp_path):
        import json

        path = tmp_path / "m.json"
        write_motion(walk, path)
        rec = json.loads(path.read_text())
        rec["joint_names"][0] = "root"
        path.write_text(json.dumps(rec))
        with pytest.raises(InvalidMotion):
            read_motion(path)
