"""Layer forward passes and their hand-derived backward rules.

Every ``foo`` returning ``(out, cache)`` has a matching ``foo_backward(dout,
cache)``. Arrays may be float32 (training) or float64 (gradient checks); the
ops keep whatever dtype they are given.
"""
from __future__ import annotations

import numpy as np

RMS_EPS = 1e-6
ROPE_BASE = 10000.0


class ShapeMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# linear
# ---------------------------------------------------------------------------


def linear(x, W, b=None):
    """``y = x @ W + b`` over the last axis of ``x``."""
    x = np.asarray(x)
    W = np.asarray(W)
    if x.shape[-1] != W.shape[0]:
        raise ShapeMismatch(f"linear: input width {x.shape[-1]} vs weight {W.shape}")
    if b is not None and np.shape(b) != (W.shape[1],):
        raise ShapeMismatch(f"linear: bias {np.shape(b)} vs weight {W.shape}")
    y = (x.reshape(-1, x.shape[-1]) @ W).reshape(*x.shape[:-1], W.shape[1])
    if b is not None:
        y = y + b
    return y


def linear_backward(dy, x, W, bias: bool = True):
    """Returns ``(dx, dW, db)``; ``db`` is None without bias."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dx = (dy2 @ W.T).reshape(*dy.shape[:-1], W.shape[0])  # one 2D product beats a stacked one
    dW = x2.T @ dy2
    db = dy2.sum(axis=0) if bias else None
    return dx, dW, db


# ---------------------------------------------------------------------------
# normalization and activations
# ---------------------------------------------------------------------------


def rmsnorm(x, gain, eps: float = RMS_EPS):
    x = np.asarray(x)
    if x.shape[-1] < 1 or np.shape(gain) != (x.shape[-1],):
        raise ShapeMismatch(f"rmsnorm: gain {np.shape(gain)} vs input {x.shape}")
    r = np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + eps)
    xhat = x / r
    return gain * xhat, (xhat, r, gain)


def rmsnorm_backward(dy, cache):
    xhat, r, gain = cache
    dgain = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dy * gain
    dx = (dxhat - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)) / r
    return dx, dgain


def silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s, (x, s)


def silu_backward(dy, cache):
    x, s = cache
    return dy * s * (1.0 + x * (1.0 - s))


def softmax(s, axis: int = -1):
    s = s - s.max(axis=axis, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------


def split_heads(x, heads: int):
    """``(..., N, d) -> (..., H, N, d/H)``."""
    *lead, n, d = x.shape
    if d % heads:
        raise ShapeMismatch(f"width {d} not divisible by {heads} heads")
    return np.moveaxis(x.reshape(*lead, n, heads, d // heads), -2, -3)


def merge_heads(x):
    """``(..., H, N, dh) -> (..., N, H*dh)``."""
    x = np.moveaxis(x, -3, -2)
    return x.reshape(*x.shape[:-2], x.shape[-2] * x.shape[-1])


def attention(q, k, v, heads: int = 1):
    """Multi-head scaled dot-product attention on ``(..., N, d)`` inputs.

    Heads are split from the channel axis and concatenated back; the output
    projection is left to the caller.
    """
    if k.shape[-2] != v.shape[-2]:
        raise ShapeMismatch("keys and values need the same sequence length")
    if q.shape[-1] != k.shape[-1] or k.shape[-1] != v.shape[-1]:
        raise ShapeMismatch("q, k, v widths differ")
    qh, kh, vh = split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)
    scale = 1.0 / float(np.sqrt(qh.shape[-1]))  # a numpy scalar would promote float32 to float64
    p = softmax((qh @ np.swapaxes(kh, -1, -2)) * scale)
    out = merge_heads(p @ vh)
    return out, (qh, kh, vh, p, scale, heads)


def attention_backward(dout, cache):
    qh, kh, vh, p, scale, heads = cache
    do = split_heads(dout, heads)
    dv = np.swapaxes(p, -1, -2) @ do
    dp = do @ np.swapaxes(vh, -1, -2)
    ds = p * (dp - np.sum(dp * p, axis=-1, keepdims=True)) * scale
    dq = ds @ kh
    dk = np.swapaxes(ds, -1, -2) @ qh
    return merge_heads(dq), merge_heads(dk), merge_heads(dv)


# ---------------------------------------------------------------------------
# rotary position embedding over several axes
# ---------------------------------------------------------------------------


def rope_angles(positions, width: int, base: float = ROPE_BASE):
    """``cos, sin`` of shape ``(..., N, width/2)`` for integer ``(..., N, A)`` positions.

    The width is cut into ``A`` equal blocks, one per axis; pair ``j`` of a
    block of width ``w`` turns by ``base**(-2j/w) * position``.
    """
    positions = np.asarray(positions)
    n_axes = positions.shape[-1]
    if width % (2 * n_axes):
        raise ShapeMismatch(f"rope width {width} not divisible by 2 x {n_axes} axes")
    block = width // n_axes
    theta = base ** (-2.0 * np.arange(block // 2) / block)
    ang = positions[..., :, None].astype(np.float64) * theta  # (..., N, A, block/2)
    ang = ang.reshape(*ang.shape[:-2], width // 2)
    return np.cos(ang), np.sin(ang)


def apply_rotary(x, cos, sin):
    """Rotate interleaved channel pairs ``(2j, 2j+1)`` of ``x`` by the given angles."""
    cos = cos.astype(x.dtype, copy=False)
    sin = sin.astype(x.dtype, copy=False)
    x0, x1 = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = x0 * cos - x1 * sin
    out[..., 1::2] = x0 * sin + x1 * cos
    return out


def apply_rotary_backward(dy, cos, sin):
    return apply_rotary(dy, cos, -sin)


def rope_multiaxis(tokens, positions, base: float = ROPE_BASE):
    """Multi-axis RoPE of ``(..., N, width)`` tokens at ``(..., N, A)`` integer positions."""
    tokens = np.asarray(tokens)
    positions = np.asarray(positions)
    if positions.shape[-2] != tokens.shape[-2]:
        raise ShapeMismatch("one position per token required")
    cos, sin = rope_angles(positions, tokens.shape[-1], base)
    return apply_rotary(tokens, cos, sin)


def rotary_width(head_dim: int, n_axes: int = 3) -> int:
    """Channels per head that get rotated; the remainder passes through."""
    return (head_dim // (2 * n_axes)) * 2 * n_axes


def rope_heads(x, cos, sin, heads: int):
    """Apply per-head rotary angles to ``(..., N, d)``.

    ``cos``/``sin`` are ``(..., N, r/2)`` for a rotated width ``r <= d/heads``;
    the same angles are used by every head and trailing channels of each head
    are left untouched (partial rotary).
    """
    *lead, n, d = x.shape
    dh = d // heads
    rw = 2 * cos.shape[-1]
    if d % heads or rw > dh:
        raise ShapeMismatch(f"rotary width {rw} does not fit heads of width {dh}")
    xh = x.reshape(*lead, n, heads, dh)
    out = xh.copy()
    out[..., :rw] = apply_rotary(xh[..., :rw], cos[..., None, :], sin[..., None, :])
    return out.reshape(x.shape)


def rope_heads_backward(dy, cos, sin, heads: int):
    return rope_heads(dy, cos, -sin, heads)
