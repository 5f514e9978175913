"""Deterministic SVG renderings: orthographic tri-view and skeleton overlay.

Tri-view panels map world axes to (horizontal, vertical) panel axes:
top = (Z, X), front = (X, Y), side = (Z, Y). Each panel has one uniform
scale (pixels per meter) with 10% padding around the drawn content; the
``data-scale`` and ``data-origin`` attributes record the mapping
``px = cx + (h - h0) * scale``, ``py = cy - (v - v0) * scale``.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .geom import DEFAULT_INTRINSICS, CameraTrajectory, Intrinsics, project_points
from .motion import BONES, JOINT_NAMES, MotionSequence

PANELS = (("top", 2, 0), ("front", 0, 1), ("side", 2, 1))
AXIS_NAMES = "XYZ"
PANEL_PX = 300.0
GAP_PX = 20.0
PAD = 0.10
ARROW_FRAC = 0.12  # arrow length as a fraction of the panel span
MIN_SPAN = 0.5  # meters; keeps a near-static scene from blowing up

CAMERA_COLOR = "#1f77b4"
SUBJECT_COLOR = "#ff7f0e"
START_COLOR = "#2ca02c"
END_COLOR = "#d62728"


class FrameOutOfRange(IndexError):
    pass


def _fmt(x: float) -> str:
    s = "%.3f" % x
    return "0.000" if s == "-0.000" else s


def _points(pts) -> str:
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)


def _write(doc: str, path) -> None:
    if path is not None:
        Path(path).write_text(doc, encoding="utf-8")


def _nice_length(span: float) -> float:
    """A 1/2/5 x 10^k length close to a quarter of ``span``."""
    target = span / 4.0
    base = 10.0 ** math.floor(math.log10(target))
    for m in (5.0, 2.0, 1.0):
        if m * base <= target:
            return m * base
    return base


def _panel(name: str, hi: int, vi: int, cam: np.ndarray, cam_dir: np.ndarray,
           subj: np.ndarray, subj_dir: np.ndarray, x0: float) -> list[str]:
    both = np.concatenate([cam[:, [hi, vi]], subj[:, [hi, vi]]])
    lo, hi_ = both.min(axis=0), both.max(axis=0)
    span = max(float((hi_ - lo).max()), MIN_SPAN)
    arrow = ARROW_FRAC * span
    span = (span + 2 * arrow) * (1.0 + 2 * PAD)
    scale = PANEL_PX / span
    h0, v0 = (lo + hi_) / 2.0
    cx, cy = x0 + PANEL_PX / 2.0, PANEL_PX / 2.0

    def to_px(p2):
        p2 = np.atleast_2d(p2)
        return np.stack([cx + (p2[:, 0] - h0) * scale, cy - (p2[:, 1] - v0) * scale], axis=1)

    out = [
        f'<g id="{name}" data-axes="{AXIS_NAMES[hi]}{AXIS_NAMES[vi]}" data-scale="{_fmt(scale)}" '
        f'data-origin="{_fmt(h0)},{_fmt(v0)}" data-center="{_fmt(cx)},{_fmt(cy)}">',
        f'<rect class="frame" x="{_fmt(x0)}" y="0.000" width="{_fmt(PANEL_PX)}" height="{_fmt(PANEL_PX)}" '
        'fill="white" stroke="#888888"/>',
        f'<text class="label" x="{_fmt(x0 + 6)}" y="16.000" font-size="12">{name} '
        f'({AXIS_NAMES[hi]}-{AXIS_NAMES[vi]})</text>',
    ]
    for cls, pts, color in (("camera", cam, CAMERA_COLOR), ("subject", subj, SUBJECT_COLOR)):
        px = to_px(pts[:, [hi, vi]])
        out.append(f'<polyline class="{cls}" fill="none" stroke="{color}" stroke-width="2" '
                   f'points="{_points(px)}"/>')
        if cls == "camera" and float(np.ptp(px, axis=0).max()) < 1.0:
            out.append(f'<circle class="camera-marker" cx="{_fmt(px[0, 0])}" cy="{_fmt(px[0, 1])}" r="4.000" '
                       f'fill="{color}"/>')
    for who, pts, dirs in (("camera", cam, cam_dir), ("subject", subj, subj_dir)):
        for when, i, color in (("start", 0, START_COLOR), ("end", -1, END_COLOR)):
            a = pts[i, [hi, vi]]
            d = dirs[i, [hi, vi]]
            n = float(np.linalg.norm(d))
            b = a + (d / n) * arrow if n > 1e-9 else a
            (ax, ay), (bx, by) = to_px(np.stack([a, b]))
            head = _arrow_head(ax, ay, bx, by)
            out.append(f'<path class="arrow {when} {who}" stroke="{color}" fill="none" stroke-width="2" '
                       f'd="M {_fmt(ax)} {_fmt(ay)} L {_fmt(bx)} {_fmt(by)}{head}"/>')
    bar = _nice_length(span)
    bx0, by0 = x0 + 10.0, PANEL_PX - 12.0
    out.append(f'<g class="scale-bar"><line x1="{_fmt(bx0)}" y1="{_fmt(by0)}" x2="{_fmt(bx0 + bar * scale)}" '
               f'y2="{_fmt(by0)}" stroke="black" stroke-width="2"/><text x="{_fmt(bx0)}" y="{_fmt(by0 - 4)}" '
               f'font-size="10">{bar:g} m</text></g>')
    out.append("</g>")
    return out


def _arrow_head(ax, ay, bx, by) -> str:
    dx, dy = bx - ax, by - ay
    n = math.hypot(dx, dy)
    if n < 1e-9:
        return ""
    ux, uy = dx / n, dy / n
    size = min(8.0, 0.4 * n)
    pts = []
    for sgn in (1.0, -1.0):
        px = bx - size * ux + sgn * 0.5 * size * -uy
        py = by - size * uy + sgn * 0.5 * size * ux
        pts.append((px, py))
    return (f" M {_fmt(pts[0][0])} {_fmt(pts[0][1])} L {_fmt(bx)} {_fmt(by)} "
            f"L {_fmt(pts[1][0])} {_fmt(pts[1][1])}")


def render_triview(camera: CameraTrajectory, motion: MotionSequence, path=None) -> str:
    """Three orthographic panels of the camera path (blue) and pelvis path (orange).

    Green arrows show start orientations, red arrows end orientations: the
    camera's viewing axis and the subject's facing direction. Returns the
    document and writes it to ``path`` when given.
    """
    if len(camera) != len(motion):
        raise ValueError(f"camera has {len(camera)} frames, motion {len(motion)}")
    cam = camera.translations
    cam_dir = camera.rotations[:, :, 2]
    subj = motion.pelvis
    subj_dir = motion.facing()
    width = 3 * PANEL_PX + 2 * GAP_PX
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_fmt(width)}" height="{_fmt(PANEL_PX)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(PANEL_PX)}">',
    ]
    for k, (name, hi, vi) in enumerate(PANELS):
        parts += _panel(name, hi, vi, cam, cam_dir, subj, subj_dir, k * (PANEL_PX + GAP_PX))
    parts.append("</svg>")
    doc = "\n".join(parts) + "\n"
    _write(doc, path)
    return doc


def render_overlay(camera: CameraTrajectory, motion: MotionSequence, K: Intrinsics = DEFAULT_INTRINSICS,
                   frame: int = 0, path=None) -> str:
    """The skeleton of one frame projected through the camera, as an image-sized SVG.

    Joints behind the camera or outside the image are omitted, along with
    their bones.
    """
    if not 0 <= frame < min(len(camera), len(motion)):
        raise FrameOutOfRange(f"frame {frame} outside 0..{min(len(camera), len(motion)) - 1}")
    uv, vis = project_points(motion.joints[frame], camera[frame], K)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{K.width_px}" height="{K.height_px}" '
        f'viewBox="0 0 {K.width_px} {K.height_px}" data-frame="{frame}">',
        f'<rect class="viewport" x="0" y="0" width="{K.width_px}" height="{K.height_px}" fill="#202020"/>',
    ]
    for a, b in BONES:
        if vis[a] and vis[b]:
            parts.append(f'<line class="bone" data-bone="{JOINT_NAMES[a]}-{JOINT_NAMES[b]}" '
                         f'x1="{_fmt(uv[a, 0])}" y1="{_fmt(uv[a, 1])}" x2="{_fmt(uv[b, 0])}" y2="{_fmt(uv[b, 1])}" '
                         'stroke="#ffffff" stroke-width="2"/>')
    for j, name in enumerate(JOINT_NAMES):
        if vis[j]:
            parts.append(f'<circle class="joint" data-joint="{name}" cx="{_fmt(uv[j, 0])}" cy="{_fmt(uv[j, 1])}" '
                         'r="3.000" fill="#ff7f0e"/>')
    parts.append("</svg>")
    doc = "\n".join(parts) + "\n"
    _write(doc, path)
    return doc
