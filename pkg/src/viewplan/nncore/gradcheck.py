from __future__ import annotations

import numpy as np

DENOM_FLOOR = 1e-6


def relative_error(analytic: float, numeric: float, floor: float = DENOM_FLOOR) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps zero gradients comparable."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(loss_fn, params: dict, grads: dict, n_coords: int = 20, step: float = 1e-5,
               rng: np.random.Generator | None = None, floor: float = DENOM_FLOOR) -> float:
    """Max relative error between ``grads`` and central finite differences.

    ``loss_fn()`` must recompute the scalar loss from ``params`` (which are
    perturbed in place and restored). Up to ``n_coords`` coordinates per
    parameter are sampled; the step is relative, ``step * max(1, |x|)``.
    Use float64 parameters.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for name, p in params.items():
        if name not in grads:
            continue
        flat = p.reshape(-1)
        g = np.asarray(grads[name]).reshape(-1)
        idx = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for i in idx:
            old = flat[i]
            h = step * max(1.0, abs(old))
            flat[i] = old + h
            lp = loss_fn()
            flat[i] = old - h
            lm = loss_fn()
            flat[i] = old
            worst = max(worst, relative_error(float(g[i]), (lp - lm) / (2 * h), floor))
    return worst
