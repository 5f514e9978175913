import xml.etree.ElementTree as ET

import numpy as np
import pytest

from viewplan.geom import CameraTrajectory, look_at, project_points
from viewplan.motion import JOINT_NAMES, MotionSequence
from viewplan.synth import ShotSpec, gen_camera, gen_motion
from viewplan.viz import FrameOutOfRange, render_overlay, render_triview

NS = {"s": "http://www.w3.org/2000/svg"}
PANEL_AXES = {"top": (2, 0), "front": (0, 1), "side": (2, 1)}


def _parse(doc):
    return ET.fromstring(doc.encode("utf-8"))


def _panels(root):
    return {g.get("id"): g for g in root.findall("s:g", NS)}


def _polyline(group, cls):
    (pl,) = [p for p in group.findall("s:polyline", NS) if p.get("class") == cls]
    return np.array([[float(v) for v in xy.split(",")] for xy in pl.get("points").split()])


def _to_world(group, px):
    scale = float(group.get("data-scale"))
    h0, v0 = map(float, group.get("data-origin").split(","))
    cx, cy = map(float, group.get("data-center").split(","))
    return np.column_stack([h0 + (px[:, 0] - cx) / scale, v0 - (px[:, 1] - cy) / scale])


@pytest.fixture(scope="module")
def idle_orbit():
    idle = gen_motion("idle", 16, 8.0, 4)
    motion = MotionSequence(np.repeat(idle.joints[:1], 16, axis=0), idle.fps)  # still subject: a true circle
    return gen_camera(ShotSpec("orbit", "side", "eye-level", "medium", seed=4), motion), motion


class TestTriView:
    def test_structure(self, orbit_sample):
        root = _parse(render_triview(orbit_sample.camera, orbit_sample.motion))
        panels = _panels(root)
        assert list(panels) == ["top", "front", "side"]
        axes = {k: g.get("data-axes") for k, g in panels.items()}
        assert axes == {"top": "ZX", "front": "XY", "side": "ZY"}
        for g in panels.values():
            lines = g.findall("s:polyline", NS)
            assert sorted(p.get("class") for p in lines) == ["camera", "subject"]
            colors = {p.get("class"): p.get("stroke") for p in lines}
            assert colors == {"camera": "#1f77b4", "subject": "#ff7f0e"}
            arrows = [p for p in g.findall("s:path", NS) if "arrow" in p.get("class").split()]
            assert len(arrows) == 4
            for a in arrows:
                cls = a.get("class").split()
                assert a.get("stroke") == ("#2ca02c" if "start" in cls else "#d62728")
            assert g.find("s:g[@class='scale-bar']", NS) is not None

    def test_deterministic_bytes(self, orbit_sample, tmp_path):
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        render_triview(orbit_sample.camera, orbit_sample.motion, a)
        render_triview(orbit_sample.camera, orbit_sample.motion, b)
        assert a.read_bytes() == b.read_bytes()

    def test_axis_true_projection(self, orbit_sample):
        panels = _panels(_parse(render_triview(orbit_sample.camera, orbit_sample.motion)))
        for name, (hi, vi) in PANEL_AXES.items():
            g = panels[name]
            cam = _to_world(g, _polyline(g, "camera"))
            subj = _to_world(g, _polyline(g, "subject"))
            np.testing.assert_allclose(cam, orbit_sample.camera.translations[:, [hi, vi]], atol=0.02)
            np.testing.assert_allclose(subj, orbit_sample.motion.pelvis[:, [hi, vi]], atol=0.02)

    def test_orbit_radius(self, idle_orbit):
        camera, motion = idle_orbit
        g = _panels(_parse(render_triview(camera, motion)))["top"]
        pts = _to_world(g, _polyline(g, "camera"))
        # algebraic circle fit: x^2 + y^2 + D x + E y + F = 0
        A = np.column_stack([pts, np.ones(len(pts))])
        D, E, F = np.linalg.lstsq(A, -(pts**2).sum(axis=1), rcond=None)[0]
        radius = np.sqrt(D * D / 4 + E * E / 4 - F)
        rel = camera.translations - motion.pelvis
        analytic = np.hypot(rel[:, 0], rel[:, 2])
        assert np.ptp(analytic) < 1e-9
        analytic = analytic[0]
        assert abs(radius - analytic) / analytic < 0.01

    def test_equal_scale_and_padding(self, orbit_sample):
        panels = _panels(_parse(render_triview(orbit_sample.camera, orbit_sample.motion)))
        for g in panels.values():
            for cls in ("camera", "subject"):
                px = _polyline(g, cls)
                x0 = float(g.find("s:rect", NS).get("x"))
                assert px[:, 0].min() >= x0 + 30 - 1e-9 and px[:, 0].max() <= x0 + 270 + 1e-9
                assert px[:, 1].min() >= 30 - 1e-9 and px[:, 1].max() <= 270 + 1e-9

    def test_static_marker(self, static_sample):
        root = _parse(render_triview(static_sample.camera, static_sample.motion))
        for g in _panels(root).values():
            assert g.find("s:circle[@class='camera-marker']", NS) is not None
            assert len([p for p in g.findall("s:path", NS) if "arrow" in p.get("class")]) == 4

    def test_moving_camera_has_no_marker(self, orbit_sample):
        root = _parse(render_triview(orbit_sample.camera, orbit_sample.motion))
        assert _panels(root)["top"].find("s:circle[@class='camera-marker']", NS) is None

    def test_frame_mismatch(self, orbit_sample):
        short = CameraTrajectory(orbit_sample.camera.translations[:8], orbit_sample.camera.rotations[:8], 8.0)
        with pytest.raises(ValueError):
            render_triview(short, orbit_sample.motion)

    def test_unwritable_path(self, orbit_sample, tmp_path):
        with pytest.raises(OSError):
            render_triview(orbit_sample.camera, orbit_sample.motion, tmp_path / "missing" / "x.svg")


def _joints(doc):
    root = _parse(doc)
    return {c.get("data-joint"): (float(c.get("cx")), float(c.get("cy")))
            for c in root.findall("s:circle", NS) if c.get("class") == "joint"}


def _facing_camera(motion, azimuth):
    p = motion.pelvis[0]
    pos = p + 3.0 * np.array([np.sin(azimuth), 0.0, np.cos(azimuth)])
    rots = np.tile(look_at(pos, p), (len(motion), 1, 1))
    return CameraTrajectory(np.tile(pos, (len(motion), 1)), rots, motion.fps)


class TestOverlay:
    def test_all_joints_inside(self, static_sample):
        joints = _joints(render_overlay(static_sample.camera, static_sample.motion, frame=3))
        assert len(joints) == 22
        for x, y in joints.values():
            assert 0 <= x <= 672 and 0 <= y <= 384

    def test_matches_projection(self, orbit_sample):
        joints = _joints(render_overlay(orbit_sample.camera, orbit_sample.motion, frame=7))
        uv, _ = project_points(orbit_sample.motion.joints[7], orbit_sample.camera[7])
        for j, name in enumerate(JOINT_NAMES):
            np.testing.assert_allclose(joints[name], uv[j], atol=1e-3)

    def test_bones_drawn(self, static_sample):
        root = _parse(render_overlay(static_sample.camera, static_sample.motion, frame=0))
        assert len([ln for ln in root.findall("s:line", NS) if ln.get("class") == "bone"]) == 21

    def test_behind_mirrors_shoulders(self):
        motion = gen_motion("idle", 8, 8.0, 0)
        front = _joints(render_overlay(_facing_camera(motion, 0.0), motion))
        back = _joints(render_overlay(_facing_camera(motion, np.pi), motion))
        order_front = front["left_shoulder"][0] - front["right_shoulder"][0]
        order_back = back["left_shoulder"][0] - back["right_shoulder"][0]
        assert order_front * order_back < 0

    def test_invisible_joints_omitted(self, static_sample):
        cam = static_sample.camera
        away = CameraTrajectory(cam.translations, np.stack([look_at(t, 2 * t - p) for t, p in
                                                            zip(cam.translations, static_sample.motion.pelvis)]),
                                cam.fps)
        root = _parse(render_overlay(away, static_sample.motion, frame=0))
        assert root.findall("s:circle", NS) == [] and root.findall("s:line", NS) == []

    @pytest.mark.parametrize("frame", [-1, 16])
    def test_out_of_range(self, static_sample, frame):
        with pytest.raises(FrameOutOfRange):
            render_overlay(static_sample.camera, static_sample.motion, frame=frame)

    def test_writes_file(self, static_sample, tmp_path):
        p = tmp_path / "o.svg"
        doc = render_overlay(static_sample.camera, static_sample.motion, frame=2, path=p)
        assert p.read_text() == doc
