from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ops import ShapeMismatch


@dataclass
class AdamState:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float | None = None) -> dict:
    """Bias-corrected Adam update, applied to ``params`` in place.

    ``lr`` overrides ``state.lr`` for this step (used by schedules).
    """
    lr = state.lr if lr is None else lr
    state.step += 1
    b1t = 1.0 - state.beta1**state.step
    b2t = 1.0 - state.beta2**state.step
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)).astype(p.dtype, copy=False)
    return params
