"""Rectified-flow training objective and Euler sampler.

Path convention: ``x_t = (1 - t) * clean + t * noise`` with velocity target
``noise - clean``; sampling integrates from ``t = 1`` (noise) down to 0.
"""
from __future__ import annotations

import numpy as np

from ..geom import CameraTrajectory, DegenerateRotation
from .model import Conditions, denormalize_camera


def shift_timestep(u, s: float):
    """``t = s u / (1 + (s - 1) u)``, a monotone warp of [0, 1] toward high noise."""
    if s < 1:
        raise ValueError(f"shift must be >= 1, got {s}")
    u = np.asarray(u, dtype=np.float64)
    return s * u / (1.0 + (s - 1.0) * u)


def interpolate(clean, noise, t):
    t = np.asarray(t, dtype=np.float64).reshape(np.shape(t) + (1,) * (np.ndim(clean) - np.ndim(t)))
    return (1.0 - t) * clean + t * noise


def fm_loss(model, clean, cond: Conditions, t, noise):
    """Mean squared velocity error and parameter gradients.

    ``clean`` and ``noise`` are ``(B, f, 9)`` normalized camera parameters,
    ``t`` is ``(B,)``. Returns ``(loss, grads)``.
    """
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if clean.shape != noise.shape:
        raise ValueError(f"clean {clean.shape} vs noise {noise.shape}")
    x_t = interpolate(clean, noise, t)
    target = noise - clean
    v, cache = model.forward(cond, x_t, t)
    err = v.astype(np.float64) - target
    loss = float(np.mean(err * err))
    dv = (2.0 / err.size) * err
    return loss, model.backward(dv.astype(v.dtype), cache)


def schedule(steps: int, s: float) -> np.ndarray:
    """Times ``t_0 = 1 > t_1 > ... > t_steps = 0`` of the shifted sampling grid."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return shift_timestep(1.0 - np.arange(steps + 1) / steps, s)


def euler_integrate(model, cond: Conditions, steps: int, s: float = 1.0, rng=None, noise=None) -> np.ndarray:
    """Integrate the predicted field from noise to ``t = 0``; returns ``(B, f, 9)``.

    ``model(cond, x, t)`` may be any callable returning a velocity of the
    same shape as ``x``.
    """
    if noise is None:
        f = model.cfg.f
        rng = np.random.default_rng(0) if rng is None else rng
        noise = rng.standard_normal((cond.batch, f, 9))
    x = np.array(noise, dtype=np.float64)
    ts = schedule(steps, s)
    for i in range(steps):
        tb = np.full(x.shape[0], ts[i])
        x = x - (ts[i] - ts[i + 1]) * np.asarray(model(cond, x, tb), dtype=np.float64)
    return x


def euler_sample(model, cond: Conditions, steps: int = 50, s: float = 1.0, rng=None, noise=None,
                 fps: float = 8.0) -> list[CameraTrajectory]:
    """Sampled camera trajectories, one per conditioning sample.

    Raises :class:`DegenerateRotation` carrying the frame index when a
    sampled rotation cannot be orthogonalized.
    """
    x = denormalize_camera(euler_integrate(model, cond, steps, s, rng, noise))
    out = []
    for b, row in enumerate(x):
        try:
            out.append(CameraTrajectory.from_9d(row, fps=fps))
        except DegenerateRotation as exc:
            err = DegenerateRotation(f"sample {b}: {exc}")
            err.index = exc.index
            raise err from exc
    return out
