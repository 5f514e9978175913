"""Stage II training loop: Adam on the flow-matching loss over synth samples."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geom import DEFAULT_INTRINSICS, Intrinsics
from ..nncore import AdamState, adam_step
from .flow import fm_loss, shift_timestep
from .model import Conditions, Denoiser, DenoiserConfig, normalize_camera


class NonFiniteLoss(FloatingPointError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step


def learning_rate(cfg: DenoiserConfig, step: int) -> float:
    """Learning rate for 0-based ``step``: optional linear warmup, then constant or cosine."""
    lr = cfg.lr
    if cfg.cosine and cfg.steps > 0:
        frac = min(step / cfg.steps, 1.0)
        lr = cfg.min_lr + (cfg.lr - cfg.min_lr) * 0.5 * (1.0 + math.cos(math.pi * frac))
    if cfg.warmup and step < cfg.warmup:
        lr *= (step + 1) / cfg.warmup
    return lr


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scales ``grads`` in place to global norm ``<= max_norm``; returns the pre-clip norm."""
    norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


@dataclass
class TrainData:
    cond: Conditions
    clean: np.ndarray  # (N, f, 9) normalized

    @classmethod
    def from_samples(cls, samples, cfg: DenoiserConfig, K: Intrinsics = DEFAULT_INTRINSICS) -> "TrainData":
        samples = list(samples)
        if not samples:
            raise ValueError("training needs at least one sample")
        cond = Conditions.from_samples(samples, cfg, K).astype(np.float32)
        clean = normalize_camera(np.stack([s.camera.to_9d() for s in samples]))
        return cls(cond, clean)

    def __len__(self) -> int:
        return self.clean.shape[0]


def draw_batch(cfg: DenoiserConfig, step: int, n: int):
    """Batch indices, flow times and noise for ``step``; depends only on (seed, step)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7A, step]))
    idx = rng.choice(n, size=min(cfg.batch, n), replace=False)
    t = shift_timestep(rng.random(len(idx)), cfg.shift)
    noise = rng.standard_normal((len(idx), cfg.f, 9))
    return idx, t, noise


def _adam_arrays(state: AdamState) -> dict:
    out = {"adam.step": np.array([state.step], dtype=np.float64)}
    for k in state.m:
        out[f"adam.m.{k}"] = state.m[k]
        out[f"adam.v.{k}"] = state.v[k]
    return out


def _adam_from(extras: dict, lr: float) -> AdamState:
    state = AdamState(lr=lr)
    if "adam.step" in extras:
        state.step = int(extras["adam.step"][0])
        for k, v in extras.items():
            if k.startswith("adam.m."):
                state.m[k[7:]] = np.array(v)
            elif k.startswith("adam.v."):
                state.v[k[7:]] = np.array(v)
    return state


@dataclass
class TrainResult:
    model: Denoiser
    losses: list = field(default_factory=list)
    steps_done: int = 0
    wall_s: float = 0.0


def save_training(path, model: Denoiser, state: AdamState) -> None:
    model.save(path, _adam_arrays(state))


def train_stage2(data, cfg: DenoiserConfig, out=None, log=None, resume=None,
                 time_budget: float | None = None, K: Intrinsics = DEFAULT_INTRINSICS,
                 callback=None) -> TrainResult:
    """Train (or continue training) a denoiser for ``cfg.steps`` total steps.

    ``data`` is a list of samples or a :class:`TrainData`. ``out`` receives the
    final checkpoint (parameters plus optimizer state); ``log`` gets one JSON
    line per step. With ``resume`` the model, optimizer and step counter come
    from that checkpoint, and since every step's randomness depends only on
    ``(seed, step)`` the run continues exactly where it stopped.
    ``time_budget`` (seconds) ends training early; ``callback(step, loss,
    model)`` runs after every step.
    """
    if not isinstance(data, TrainData):
        data = TrainData.from_samples(data, cfg, K)
    if resume is not None:
        model, extras = Denoiser.load(resume)
        state = _adam_from(extras, cfg.lr)
        model.cfg = cfg = model.cfg.replace(steps=cfg.steps)
    else:
        model = Denoiser(cfg)
        state = AdamState(lr=cfg.lr)
    result = TrainResult(model)
    logf = open(log, "a", encoding="utf-8") if log is not None else None
    start = time.perf_counter()
    try:
        for step in range(state.step, cfg.steps):
            t0 = time.perf_counter()
            idx, t, noise = draw_batch(cfg, step, len(data))
            loss, grads = fm_loss(model, data.clean[idx], data.cond.subset(idx), t, noise)
            if not math.isfinite(loss):
                raise NonFiniteLoss(step, loss)
            if cfg.clip:
                clip_gradients(grads, cfg.clip)
            adam_step(model.params, grads, state, learning_rate(cfg, step))
            result.losses.append(loss)
            result.steps_done += 1
            if logf is not None:
                ms = (time.perf_counter() - t0) * 1000.0
                logf.write(json.dumps({"step": step, "loss": round(loss, 8), "wall_ms": round(ms, 3)}) + "\n")
            if callback is not None:
                callback(step, loss, model)
            if time_budget is not None and time.perf_counter() - start > time_budget:
                break
    finally:
        if logf is not None:
            logf.close()
    result.wall_s = time.perf_counter() - start
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        save_training(out, model, state)
    return result
