"""Stage II camera denoiser: encoders, tri-branch blocks and an output head."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..geom import DEFAULT_INTRINSICS, Intrinsics
from ..motion import JOINT_NAMES
from ..nncore import ShapeMismatch, linear_backward, read_checkpoint, rmsnorm, rmsnorm_backward, silu, silu_backward
from ..nncore import write_checkpoint as _write
from ..nncore.checkpoint import CheckpointError
from .blocks import STREAMS, init_block, mmdit_block, mmdit_block_backward
from .encoders import (
    N_AXES,
    encode_tokens,
    encode_tokens_backward,
    latent_frames,
    motion_positions,
    token_rotary,
    video_features,
)

N_JOINTS = len(JOINT_NAMES)
TRANSLATION_SCALE = 3.0  # meters; camera translations are divided by this before noising
TIME_SCALE = 1000.0  # timestep multiplier inside the sinusoidal embedding


@dataclass(frozen=True)
class DenoiserConfig:
    d: int = 64
    blocks: int = 4
    heads: int = 4
    f: int = 16
    factor: int = 4
    lr: float = 5e-5
    batch: int = 16
    steps: int = 1000
    seed: int = 0
    shift: float = 1.0
    warmup: int = 0  # linear warmup steps
    cosine: int = 0  # 1: cosine decay from lr to min_lr over ``steps``
    min_lr: float = 0.0
    clip: float = 0.0  # global gradient-norm clip; 0 disables

    def __post_init__(self):
        for name in ("d", "blocks", "heads", "f", "factor", "batch"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.steps < 0 or self.lr <= 0 or self.shift < 1:
            raise ValueError("steps >= 0, lr > 0 and shift >= 1 required")
        if self.warmup < 0 or self.cosine not in (0, 1) or self.min_lr < 0 or self.clip < 0:
            raise ValueError("bad learning-rate schedule settings")
        if self.d % self.heads or (self.d // self.heads) < 2 * N_AXES:
            raise ValueError(f"d={self.d} must split into {self.heads} heads of width >= {2 * N_AXES}")

    @property
    def latent(self) -> int:
        return latent_frames(self.f, self.factor)

    @property
    def head_dim(self) -> int:
        return self.d // self.heads

    def replace(self, **kw) -> "DenoiserConfig":
        return DenoiserConfig(**{**asdict(self), **kw})


CONFIG_KEY = "meta.config"


def normalize_camera(c9) -> np.ndarray:
    c = np.array(c9, dtype=np.float64)
    c[..., :3] /= TRANSLATION_SCALE
    return c


def denormalize_camera(x) -> np.ndarray:
    c = np.array(x, dtype=np.float64)
    c[..., :3] *= TRANSLATION_SCALE
    return c


@dataclass
class Conditions:
    """Clean conditioning inputs for a batch: 2D-joint video surrogate and canonical motion."""

    video: np.ndarray  # (B, f, k, 3)
    motion: np.ndarray  # (B, f, k, 3)
    rotary: tuple  # cos, sin of shape (B*f', n_total, r/2)

    @property
    def batch(self) -> int:
        return self.video.shape[0]

    @classmethod
    def build(cls, obs2d, vis, joints, cfg: DenoiserConfig, K: Intrinsics = DEFAULT_INTRINSICS) -> "Conditions":
        video = video_features(obs2d, vis, K)
        motion = np.asarray(joints, dtype=np.float64)
        if video.ndim == 3:
            video, motion = video[None], motion[None]
        if video.shape != motion.shape or video.shape[1] != cfg.f:
            raise ShapeMismatch(f"video {video.shape} / motion {motion.shape} vs f={cfg.f}")
        pos = motion_positions(motion, cfg.factor)
        cos, sin = token_rotary(pos, video.shape[2], cfg.head_dim)
        B, fp = pos.shape[:2]
        cos = cos.reshape(B * fp, *cos.shape[2:])
        sin = sin.reshape(B * fp, *sin.shape[2:])
        return cls(video, motion, (cos, sin))

    @classmethod
    def from_samples(cls, samples, cfg: DenoiserConfig, K: Intrinsics = DEFAULT_INTRINSICS) -> "Conditions":
        obs = np.stack([s.obs2d for s in samples])
        vis = np.stack([s.vis for s in samples])
        joints = np.stack([s.motion.joints for s in samples])
        return cls.build(obs, vis, joints, cfg, K)

    def subset(self, idx) -> "Conditions":
        idx = np.asarray(idx)
        B = self.batch
        fp = self.rotary[0].shape[0] // B
        rows = (idx[:, None] * fp + np.arange(fp)).reshape(-1)
        return Conditions(self.video[idx], self.motion[idx], (self.rotary[0][rows], self.rotary[1][rows]))

    def astype(self, dtype) -> "Conditions":
        return Conditions(self.video.astype(dtype), self.motion.astype(dtype),
                          tuple(r.astype(dtype) for r in self.rotary))


def timestep_features(t, width: int) -> np.ndarray:
    """Sinusoidal features ``[cos, sin]`` of ``TIME_SCALE * t``, ``(B, width)``."""
    half = width // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = TIME_SCALE * np.asarray(t, dtype=np.float64)[:, None] * freqs
    return np.concatenate([np.cos(ang), np.sin(ang)], axis=1)


class Denoiser:
    """Predicts the flow velocity of noisy normalized camera parameters.

    Parameters live in one flat dict keyed ``"enc_v.W"``, ``"blocks.0.c.Wq"``
    and so on, so optimizers and checkpoints treat them uniformly.
    """

    def __init__(self, cfg: DenoiserConfig, params: dict | None = None, dtype=np.float32):
        self.cfg = cfg
        self.params = self.init_params(cfg, dtype) if params is None else params
        self._link()

    @staticmethod
    def init_params(cfg: DenoiserConfig, dtype=np.float32) -> dict:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD1]))
        d, fac = cfg.d, cfg.factor
        p = {
            "enc_v.W": rng.normal(0.0, 3**-0.5, (fac, 3, d)),
            "enc_v.b": np.zeros(d),
            "enc_m.W": rng.normal(0.0, 3**-0.5, (fac, 3, d)),
            "enc_m.b": np.zeros(d),
            "enc_c.W": rng.normal(0.0, 9**-0.5, (fac, 9, d)),
            "enc_c.b": np.zeros(d),
            "ids.v": rng.normal(0.0, 1.0, (N_JOINTS, d)),
            "ids.m": rng.normal(0.0, 1.0, (N_JOINTS, d)),
            "time.W": rng.normal(0.0, d**-0.5, (d, d)),
            "time.b": np.zeros(d),
        }
        for i in range(cfg.blocks):
            blk = init_block(d, rng, np.float64)
            for group, arrs in blk.items():
                for name, arr in arrs.items():
                    p[f"blocks.{i}.{group}.{name}"] = arr
        p["head.norm"] = np.ones(d)
        p["head.W"] = np.zeros((d, fac * 9))
        p["head.b"] = np.zeros(fac * 9)
        return {k: np.ascontiguousarray(v, dtype=dtype) for k, v in p.items()}

    def _link(self):
        self.blocks = []
        for i in range(self.cfg.blocks):
            blk = {}
            for group in (*STREAMS, "mod"):
                pre = f"blocks.{i}.{group}."
                blk[group] = {k[len(pre):]: v for k, v in self.params.items() if k.startswith(pre)}
            self.blocks.append(blk)

    @property
    def dtype(self):
        return self.params["head.W"].dtype

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    # -- forward / backward ------------------------------------------------

    def forward(self, cond: Conditions, x_t, t):
        """Velocity prediction ``(B, f, 9)`` for noisy inputs ``x_t`` at times ``t``."""
        P, cfg = self.params, self.cfg
        x_t = np.asarray(x_t, dtype=self.dtype)
        B, f = x_t.shape[:2]
        if x_t.shape != (cond.batch, cfg.f, 9):
            raise ShapeMismatch(f"x_t {x_t.shape} vs ({cond.batch}, {cfg.f}, 9)")
        d, fp = cfg.d, cfg.latent
        cache = {}
        zv, cache["enc_v"] = encode_tokens(cond.video, P["enc_v.W"], P["enc_v.b"], P["ids.v"])
        zm, cache["enc_m"] = encode_tokens(cond.motion, P["enc_m.W"], P["enc_m.b"], P["ids.m"])
        zc, cache["enc_c"] = encode_tokens(x_t[:, :, None, :], P["enc_c.W"], P["enc_c.b"])
        streams = {"v": zv.reshape(B * fp, -1, d), "m": zm.reshape(B * fp, -1, d), "c": zc.reshape(B * fp, 1, d)}

        tf = timestep_features(np.broadcast_to(np.asarray(t, dtype=np.float64), (B,)), d).astype(self.dtype)
        u = tf @ P["time.W"] + P["time.b"]
        temb, cache["time_act"] = silu(u)
        cache["time_in"] = tf
        temb_tok = np.repeat(temb, fp, axis=0)

        rotary = tuple(r.astype(self.dtype, copy=False) for r in cond.rotary)
        cache["blocks"] = []
        for blk in self.blocks:
            streams, bc = mmdit_block(streams, blk, temb_tok, cfg.heads, rotary)
            cache["blocks"].append(bc)

        h, cache["head_norm"] = rmsnorm(streams["c"][:, 0], P["head.norm"])
        out = h @ P["head.W"] + P["head.b"]
        cache["head_in"] = h
        cache["shape"] = (B, f, fp)
        v = out.reshape(B, fp * cfg.factor, 9)[:, :f]
        return v, cache

    def backward(self, dv, cache) -> dict:
        P, cfg = self.params, self.cfg
        B, f, fp = cache["shape"]
        d = cfg.d
        g = {}
        dout = np.zeros((B, fp * cfg.factor, 9), dtype=dv.dtype)
        dout[:, :f] = dv
        dout = dout.reshape(B * fp, cfg.factor * 9)
        dh, g["head.W"], g["head.b"] = linear_backward(dout, cache["head_in"], P["head.W"])
        dzc, g["head.norm"] = rmsnorm_backward(dh, cache["head_norm"])

        zero = np.zeros((), dtype=dzc.dtype)
        dstreams = {"v": zero, "m": zero, "c": dzc[:, None, :]}
        dtemb = 0.0
        for i in reversed(range(cfg.blocks)):
            bc = cache["blocks"][i]
            # materialized: matmuls over zero-stride broadcast views are very slow
            full = {s: np.ascontiguousarray(np.broadcast_to(dstreams[s], _stream_shape(bc, s, B * fp, d)))
                    for s in STREAMS}
            dstreams, dt_i, bg = mmdit_block_backward(full, bc, self.blocks[i], cfg.heads)
            dtemb = dtemb + dt_i
            for group, arrs in bg.items():
                for name, arr in arrs.items():
                    g[f"blocks.{i}.{group}.{name}"] = arr

        dtemb = dtemb.reshape(B, fp, d).sum(axis=1)
        du = silu_backward(dtemb, cache["time_act"])
        _, g["time.W"], g["time.b"] = linear_backward(du, cache["time_in"], P["time.W"])

        g["enc_v.W"], g["enc_v.b"], g["ids.v"] = encode_tokens_backward(dstreams["v"].reshape(B, fp, -1, d), cache["enc_v"])
        g["enc_m.W"], g["enc_m.b"], g["ids.m"] = encode_tokens_backward(dstreams["m"].reshape(B, fp, -1, d), cache["enc_m"])
        g["enc_c.W"], g["enc_c.b"], _ = encode_tokens_backward(dstreams["c"].reshape(B, fp, 1, d), cache["enc_c"])
        return {k: np.asarray(v, dtype=P[k].dtype) for k, v in g.items()}

    def __call__(self, cond: Conditions, x_t, t) -> np.ndarray:
        return self.forward(cond, x_t, t)[0]

    # -- persistence -------------------------------------------------------

    def config_arrays(self) -> dict:
        """The configuration as JSON text in byte codes, which float32 holds exactly."""
        raw = json.dumps(asdict(self.cfg), sort_keys=True).encode("utf-8")
        return {CONFIG_KEY: np.frombuffer(raw, dtype=np.uint8).astype(np.float32)}

    def save(self, path, extra: dict | None = None) -> None:
        arrays = {**self.config_arrays(), **self.params, **(extra or {})}
        _write(path, arrays, self.cfg.d, self.cfg.blocks, self.cfg.seed)

    @classmethod
    def load(cls, path) -> tuple["Denoiser", dict]:
        """Returns ``(model, extras)``; extras holds any non-parameter arrays (optimizer state)."""
        header, arrays = read_checkpoint(path)
        if CONFIG_KEY not in arrays:
            raise CheckpointError(f"{path}: no model configuration stored")
        try:
            meta = json.loads(bytes(arrays[CONFIG_KEY].astype(np.uint8)).decode("utf-8"))
            cfg = DenoiserConfig(**meta)
        except (TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: bad model configuration ({exc})") from exc
        if (cfg.d, cfg.blocks) != (header["d"], header["blocks"]):
            raise CheckpointError(f"{path}: header disagrees with stored configuration")
        expected = _param_names(cfg)
        missing = expected - set(arrays)
        if missing:
            raise CheckpointError(f"{path}: missing parameters {sorted(missing)[:3]}")
        params = {k: np.array(arrays[k]) for k in sorted(expected, key=list(arrays).index)}
        extras = {k: v for k, v in arrays.items() if k not in expected and k != CONFIG_KEY}
        return cls(cfg, params), extras


def _stream_shape(bc, s, N, d):
    n = dict(zip(bc["names"], bc["sizes"]))[s]
    return (N, n, d)


def _param_names(cfg: DenoiserConfig) -> set:
    base = {"enc_v.W", "enc_v.b", "enc_m.W", "enc_m.b", "enc_c.W", "enc_c.b", "ids.v", "ids.m",
            "time.W", "time.b", "head.norm", "head.W", "head.b"}
    branch = ("norm1", "Wq", "Wk", "Wv", "Wo", "norm2", "W1", "b1", "W2", "b2")
    for i in range(cfg.blocks):
        base |= {f"blocks.{i}.{s}.{n}" for s in STREAMS for n in branch}
        base |= {f"blocks.{i}.mod.W", f"blocks.{i}.mod.b"}
    return base
