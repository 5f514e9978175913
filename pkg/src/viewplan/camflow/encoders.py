"""Pose encoders: per-token linear lift with temporal downsampling.

Every ``factor`` consecutive frames collapse into one latent frame. Each slot
inside the window has its own lift matrix and the lifted slots are averaged,
``z = mean_s(x_s @ W_s) + b``. With all ``W_s`` equal this is exactly a
window-mean of the input followed by one shared linear lift.
"""
from __future__ import annotations

import numpy as np

from ..geom import DEFAULT_INTRINSICS, CameraTrajectory, Intrinsics
from ..motion import MotionSequence, temporal_resample
from ..nncore import ShapeMismatch, rope_angles
from ..nncore.ops import rotary_width

POSITION_SCALE = 10.0  # decimeter grid for 3D RoPE coordinates
CAMERA_SENTINEL = 1000  # reserved RoPE coordinate for camera tokens
N_AXES = 3


def latent_frames(f: int, factor: int) -> int:
    return -(-f // factor)


def _windows(x: np.ndarray, factor: int) -> np.ndarray:
    """``(B, f, n, c) -> (B, f', n, factor*c)``; a short last window repeats its final frame."""
    B, f, n, c = x.shape
    fp = latent_frames(f, factor)
    pad = fp * factor - f
    if pad:
        x = np.concatenate([x, np.repeat(x[:, -1:], pad, axis=1)], axis=1)
    xw = x.reshape(B, fp, factor, n, c).transpose(0, 1, 3, 2, 4)
    return xw.reshape(B, fp, n, factor * c)


def encode_tokens(x, W, b, emb=None):
    """Lift ``(B, f, n, c)`` inputs to ``(B, f', n, d)`` tokens.

    ``W`` is ``(factor, c, d)``; ``emb`` an optional ``(n, d)`` per-token table.
    """
    x = np.asarray(x, dtype=W.dtype)
    factor, c, d = W.shape
    if x.ndim != 4 or x.shape[-1] != c:
        raise ShapeMismatch(f"encoder expects (B, f, n, {c}) input, got {x.shape}")
    if emb is not None and emb.shape != (x.shape[2], d):
        raise ShapeMismatch(f"token table {emb.shape} vs {x.shape[2]} tokens of width {d}")
    xw = _windows(x, factor)
    z = xw @ (W.reshape(factor * c, d) / factor) + b
    if emb is not None:
        z = z + emb
    return z, (xw, W.shape, emb is not None)


def encode_tokens_backward(dz, cache):
    xw, (factor, c, d), has_emb = cache
    dz2 = dz.reshape(-1, d)
    dW = (xw.reshape(-1, factor * c).T @ dz2).reshape(factor, c, d) / factor
    db = dz2.sum(axis=0)
    demb = dz.sum(axis=(0, 1)) if has_emb else None
    return dW, db, demb


# ---------------------------------------------------------------------------
# input features
# ---------------------------------------------------------------------------


def video_features(obs2d, vis, K: Intrinsics = DEFAULT_INTRINSICS) -> np.ndarray:
    """``(..., f, k, 3)``: centered focal-normalized pixel coordinates and visibility.

    Invisible joints carry zeros, as an image would show nothing there.
    """
    vis = np.asarray(vis, dtype=bool)
    uv = np.asarray(obs2d, dtype=np.float64)
    xy = (uv - [K.cx, K.cy]) / K.focal_px
    xy = np.where(vis[..., None], np.nan_to_num(xy), 0.0)
    return np.concatenate([xy, vis[..., None].astype(np.float64)], axis=-1)


def motion_positions(joints, factor: int) -> np.ndarray:
    """Integer 3D RoPE coordinates of the window-mean joints, ``(..., f', k, 3)``."""
    j = np.moveaxis(np.asarray(joints, dtype=np.float64), -3, 0)
    means = np.moveaxis(temporal_resample(j, factor), 0, -3)
    return np.rint(POSITION_SCALE * means).astype(np.int64)


def token_rotary(motion_pos, n_video: int, head_dim: int):
    """``cos, sin`` for the joint token sequence ``[video; motion; camera]``.

    Video tokens are left unrotated (position 0 on all axes), motion tokens use
    their quantized 3D coordinates and the camera token sits at the reserved
    sentinel coordinate.
    """
    motion_pos = np.asarray(motion_pos)
    lead = motion_pos.shape[:-2]
    rw = rotary_width(head_dim, N_AXES)
    vid = np.zeros(lead + (n_video, N_AXES), dtype=np.int64)
    cam = np.full(lead + (1, N_AXES), CAMERA_SENTINEL, dtype=np.int64)
    pos = np.concatenate([vid, motion_pos, cam], axis=-2)
    return rope_angles(pos, rw)


def camera_input(c) -> np.ndarray:
    """A trajectory or ``(f, 9)`` array as ``(1, f, 1, 9)`` encoder input."""
    arr = c.to_9d() if isinstance(c, CameraTrajectory) else np.asarray(c, dtype=np.float64)
    if arr.shape[-1] != 9:
        raise ShapeMismatch(f"camera input must end in 9 values, got {arr.shape}")
    return arr.reshape((-1, arr.shape[-2], 1, 9))


def motion_input(m) -> np.ndarray:
    arr = m.joints if isinstance(m, MotionSequence) else np.asarray(m, dtype=np.float64)
    return arr.reshape((-1,) + arr.shape[-3:])
