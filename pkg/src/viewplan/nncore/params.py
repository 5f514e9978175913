from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import (
    ShapeMismatch,
    attention,
    attention_backward,
    linear_backward,
    rope_heads,
    rope_heads_backward,
)


@dataclass
class AttentionParams:
    """Bias-free query/key/value/output projections, each ``(d, d)``."""

    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    W_O: np.ndarray
    heads: int = 1

    def __post_init__(self):
        d = self.W_Q.shape[0]
        for name in ("W_Q", "W_K", "W_V", "W_O"):
            if getattr(self, name).shape != (d, d):
                raise ShapeMismatch(f"{name} must be ({d}, {d})")
        if d % self.heads:
            raise ShapeMismatch(f"width {d} not divisible by {self.heads} heads")

    @property
    def d(self) -> int:
        return self.W_Q.shape[0]

    @classmethod
    def init(cls, d: int, heads: int, rng: np.random.Generator, dtype=np.float64) -> "AttentionParams":
        mats = [rng.normal(0.0, d**-0.5, (d, d)).astype(dtype) for _ in range(4)]
        return cls(*mats, heads=heads)

    def as_dict(self) -> dict:
        return {"W_Q": self.W_Q, "W_K": self.W_K, "W_V": self.W_V, "W_O": self.W_O}


def self_attention(T, params: AttentionParams, rotary=None):
    """``Attn(T W_Q, T W_K, T W_V) W_O`` for tokens ``(..., N, d)``.

    ``rotary`` is an optional ``(cos, sin)`` pair applied to queries and keys.
    """
    if T.shape[-1] != params.d:
        raise ShapeMismatch(f"token width {T.shape[-1]} vs attention width {params.d}")
    q, k, v = T @ params.W_Q, T @ params.W_K, T @ params.W_V
    if rotary is not None:
        q = rope_heads(q, *rotary, params.heads)
        k = rope_heads(k, *rotary, params.heads)
    a, acache = attention(q, k, v, params.heads)
    return a @ params.W_O, (T, a, acache, rotary)


def self_attention_backward(dout, cache, params: AttentionParams):
    """Returns ``(dT, grads)`` with grads keyed like :meth:`AttentionParams.as_dict`."""
    T, a, acache, rotary = cache
    da, dWO, _ = linear_backward(dout, a, params.W_O, bias=False)
    dq, dk, dv = attention_backward(da, acache)
    if rotary is not None:
        dq = rope_heads_backward(dq, *rotary, params.heads)
        dk = rope_heads_backward(dk, *rotary, params.heads)
    dT = 0.0
    grads = {"W_O": dWO}
    for g, W, name in ((dq, params.W_Q, "W_Q"), (dk, params.W_K, "W_K"), (dv, params.W_V, "W_V")):
        dTi, dW, _ = linear_backward(g, T, W, bias=False)
        dT = dT + dTi
        grads[name] = dW
    return dT, grads
