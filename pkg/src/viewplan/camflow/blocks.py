"""Attention blocks over per-latent-frame token sets.

All token tensors are ``(N, n, d)``: ``N`` independent sequences (one per
sample and latent frame), ``n`` tokens each. Rotary angles, when given, are
``(N, n_total, r/2)`` for the concatenated sequence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nncore import (
    AttentionParams,
    ShapeMismatch,
    attention,
    attention_backward,
    linear_backward,
    rmsnorm,
    rmsnorm_backward,
    self_attention,
    self_attention_backward,
    silu,
    silu_backward,
)
from ..nncore.ops import rope_heads, rope_heads_backward

STREAMS = ("v", "m", "c")
MODULATED = "c"  # the timestep scales only the camera branch


# ---------------------------------------------------------------------------
# spatial motion attention and guided assembly
# ---------------------------------------------------------------------------


def spatial_motion_attention(z_v, z_m, params: AttentionParams, rotary=None):
    """Concatenate motion tokens after video tokens, self-attend, keep the video part.

    Returns ``(z_v + Attn(T)[:n_v], cache)``; the output shape equals ``z_v``'s
    for any number of motion tokens.
    """
    z_v = np.asarray(z_v)
    z_m = np.asarray(z_m)
    if z_v.shape[:-2] != z_m.shape[:-2] or z_v.shape[-1] != z_m.shape[-1]:
        raise ShapeMismatch(f"video tokens {z_v.shape} and motion tokens {z_m.shape} disagree")
    T = np.concatenate([z_v, z_m], axis=-2)
    out, cache = self_attention(T, params, rotary)
    n_v = z_v.shape[-2]
    return z_v + out[..., :n_v, :], (cache, n_v, T.shape)


def spatial_motion_attention_backward(dout, cache, params: AttentionParams):
    """Returns ``(dz_v, dz_m, grads)``."""
    acache, n_v, shape = cache
    dfull = np.zeros(shape, dtype=dout.dtype)
    dfull[..., :n_v, :] = dout
    dT, grads = self_attention_backward(dfull, acache, params)
    return dout + dT[..., :n_v, :], dT[..., n_v:, :], grads


@dataclass(frozen=True)
class GuidanceConfig:
    p: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"guidance probability must lie in [0, 1], got {self.p}")


def guided_token_assembly(z_v, z_m, z_c, cfg: GuidanceConfig, rng: np.random.Generator):
    """``[z_v; z_m; z_c]`` with probability ``p``, else ``[z_v; z_m]``.

    One draw per call (one training sample), shared by all of its latent
    frames. Returns ``(T, guided)``.
    """
    guided = bool(rng.random() < cfg.p)
    parts = [z_v, z_m, z_c] if guided else [z_v, z_m]
    return np.concatenate(parts, axis=-2), guided


# ---------------------------------------------------------------------------
# tri-branch block
# ---------------------------------------------------------------------------


def init_branch(d: int, rng: np.random.Generator, dtype=np.float32, hidden: int | None = None) -> dict:
    hidden = 2 * d if hidden is None else hidden
    s = d**-0.5
    return {
        "norm1": np.ones(d, dtype),
        "Wq": rng.normal(0.0, s, (d, d)).astype(dtype),
        "Wk": rng.normal(0.0, s, (d, d)).astype(dtype),
        "Wv": rng.normal(0.0, s, (d, d)).astype(dtype),
        "Wo": rng.normal(0.0, s, (d, d)).astype(dtype),
        "norm2": np.ones(d, dtype),
        "W1": rng.normal(0.0, s, (d, hidden)).astype(dtype),
        "b1": np.zeros(hidden, dtype),
        "W2": rng.normal(0.0, hidden**-0.5, (hidden, d)).astype(dtype),
        "b2": np.zeros(d, dtype),
    }


def init_block(d: int, rng: np.random.Generator, dtype=np.float32) -> dict:
    """Parameters of one block: a branch per stream plus the timestep modulation."""
    p = {s: init_branch(d, rng, dtype) for s in STREAMS}
    p["mod"] = {"W": np.zeros((d, 2 * d), dtype), "b": np.zeros(2 * d, dtype)}
    return p


def mmdit_block(streams: dict, params: dict, temb, heads: int, rotary=None):
    """One joint-attention block over the video, motion and camera streams.

    ``streams`` maps ``"v"``, ``"m"``, ``"c"`` to ``(N, n_s, d)`` tokens (a
    stream may have zero tokens); ``temb`` is the ``(N, d)`` timestep
    embedding. Each stream has its own norms, projections and feed-forward;
    attention runs once over the concatenation ``[v; m; c]``. The camera
    branch's normalized inputs are scaled by ``1 + scale(temb)``.
    Returns ``(new_streams, cache)``.
    """
    names = [s for s in STREAMS if s in streams]
    N, _, d = streams[names[0]].shape
    for s in names:
        if streams[s].shape[0] != N or streams[s].shape[2] != d:
            raise ShapeMismatch(f"stream {s!r} has shape {streams[s].shape}, expected ({N}, n, {d})")
    if np.shape(temb) != (N, d):
        raise ShapeMismatch(f"timestep embedding {np.shape(temb)} vs ({N}, {d})")
    mod = temb @ params["mod"]["W"] + params["mod"]["b"]
    scale_attn, scale_ffn = 1.0 + mod[:, None, :d], 1.0 + mod[:, None, d:]

    c = {"names": names, "temb": temb, "scale_attn": scale_attn, "scale_ffn": scale_ffn, "rotary": rotary}
    qs, ks, vs, sizes = [], [], [], []
    for s in names:
        p = params[s]
        h, c[s, "n1"] = rmsnorm(streams[s], p["norm1"])
        if s == MODULATED:
            c[s, "h_pre"] = h
            h = h * scale_attn
        c[s, "h"] = h
        qs.append(h @ p["Wq"])
        ks.append(h @ p["Wk"])
        vs.append(h @ p["Wv"])
        sizes.append(streams[s].shape[1])
    q, k, v = (np.concatenate(x, axis=1) for x in (qs, ks, vs))
    if rotary is not None:
        q = rope_heads(q, *rotary, heads)
        k = rope_heads(k, *rotary, heads)
    a, c["attn"] = attention(q, k, v, heads)
    c["sizes"] = sizes

    out = {}
    start = 0
    for s, n in zip(names, sizes):
        p = params[s]
        a_s = a[:, start : start + n]
        start += n
        c[s, "a"] = a_s
        x1 = streams[s] + a_s @ p["Wo"]
        g, c[s, "n2"] = rmsnorm(x1, p["norm2"])
        if s == MODULATED:
            c[s, "g_pre"] = g
            g = g * scale_ffn
        c[s, "g"] = g
        u = g @ p["W1"] + p["b1"]
        act, c[s, "act"] = silu(u)
        c[s, "act_out"] = act
        out[s] = x1 + act @ p["W2"] + p["b2"]
    return out, c


def mmdit_block_backward(dout: dict, cache: dict, params: dict, heads: int):
    """Returns ``(dstreams, dtemb, grads)`` with grads shaped like ``params``."""
    names = cache["names"]
    d = cache["temb"].shape[1]
    grads = {"mod": {}}
    dx1 = {}
    dscale_attn = dscale_ffn = 0.0
    for s in names:
        p = params[s]
        gs = grads[s] = {}
        dy = dout[s]
        dact, gs["W2"], gs["b2"] = linear_backward(dy, cache[s, "act_out"], p["W2"])
        du = silu_backward(dact, cache[s, "act"])
        dg, gs["W1"], gs["b1"] = linear_backward(du, cache[s, "g"], p["W1"])
        if s == MODULATED:
            dscale_ffn = (dg * cache[s, "g_pre"]).sum(axis=1)
            dg = dg * cache["scale_ffn"]
        dx, gs["norm2"] = rmsnorm_backward(dg, cache[s, "n2"])
        dx1[s] = dy + dx

    da_parts = []
    for s in names:
        p = params[s]
        da_s, grads[s]["Wo"], _ = linear_backward(dx1[s], cache[s, "a"], p["Wo"], bias=False)
        da_parts.append(da_s)
    dq, dk, dv = attention_backward(np.concatenate(da_parts, axis=1), cache["attn"])
    if cache["rotary"] is not None:
        dq = rope_heads_backward(dq, *cache["rotary"], heads)
        dk = rope_heads_backward(dk, *cache["rotary"], heads)

    dstreams = {}
    start = 0
    for s, n in zip(names, cache["sizes"]):
        p = params[s]
        gs = grads[s]
        sl = slice(start, start + n)
        start += n
        h = cache[s, "h"]
        dh, gs["Wq"], _ = linear_backward(dq[:, sl], h, p["Wq"], bias=False)
        dh2, gs["Wk"], _ = linear_backward(dk[:, sl], h, p["Wk"], bias=False)
        dh3, gs["Wv"], _ = linear_backward(dv[:, sl], h, p["Wv"], bias=False)
        dh = dh + dh2 + dh3
        if s == MODULATED:
            dscale_attn = (dh * cache[s, "h_pre"]).sum(axis=1)
            dh = dh * cache["scale_attn"]
        dz, gs["norm1"] = rmsnorm_backward(dh, cache[s, "n1"])
        dstreams[s] = dx1[s] + dz

    N = cache["temb"].shape[0]
    dmod = np.zeros((N, 2 * d), dtype=cache["temb"].dtype)
    dmod[:, :d] += dscale_attn
    dmod[:, d:] += dscale_ffn
    dtemb, grads["mod"]["W"], grads["mod"]["b"] = linear_backward(dmod, cache["temb"], params["mod"]["W"])
    return dstreams, dtemb, grads
