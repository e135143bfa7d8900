"""Adam with decoupled weight decay (AdamW) and global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from .network import NetworkParameters

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float | None):
    if not max_norm:
        return grads
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}


def optimizer_step(
    params: NetworkParameters,
    grads: dict[str, np.ndarray],
    learning_rate: float,
    weight_decay: float = 0.0,
    grad_clip_norm: float | None = None,
) -> NetworkParameters:
    """One AdamW update; returns new parameters and leaves ``params`` untouched.

    The decay shrinks weights directly by ``(1 - lr * weight_decay)``; it never
    enters the moment estimates.
    """
    grads = clip_by_global_norm(grads, grad_clip_norm)
    out = params.copy()
    out.step += 1
    t = out.step
    bias1 = 1.0 - BETA1**t
    bias2 = 1.0 - BETA2**t
    for name, w in out.weights.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {w.shape}")
        m = out.moment1.get(name, np.zeros_like(w))
        v = out.moment2.get(name, np.zeros_like(w))
        m = BETA1 * m + (1.0 - BETA1) * g
        v = BETA2 * v + (1.0 - BETA2) * g * g
        w *= 1.0 - learning_rate * weight_decay
        w -= learning_rate * (m / bias1) / (np.sqrt(v / bias2) + EPS)
        out.moment1[name] = m
        out.moment2[name] = v
    return out
