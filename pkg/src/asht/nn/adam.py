"""Adam optimizer over flat name->array parameter dicts.

Standard bias-corrected Adam: with gradient g,
    m <- b1*m + (1-b1)*g           m_hat = m / (1 - b1^t)
    v <- b2*v + (1-b2)*g^2         v_hat = v / (1 - b2^t)
    param <- param - lr * m_hat / (sqrt(v_hat) + eps)

Parameters are visited in sorted name order so an update is a deterministic
function of (params, grads, state).  Deliberately strict: a non-finite
gradient anywhere aborts the step and names the offending block, because a
silent NaN here corrupts every later update through the moment buffers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(ValueError):
    """A gradient block contained NaN or infinity."""


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params: dict, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name in sorted(params):
        state.m[name] = np.zeros_like(params[name])
        state.v[name] = np.zeros_like(params[name])
    return state


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """One in-place update of every parameter; returns ``params``."""
    if set(grads) != set(params):
        raise ValueError("grads and params must cover the same names")
    for name in sorted(params):
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradientError(f"non-finite gradient in block {name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name in sorted(params):
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def global_grad_norm(grads: dict) -> float:
    """L2 norm over every entry of every block."""
    total = 0.0
    for name in sorted(grads):
        total += float(np.sum(grads[name] * grads[name]))
    return float(np.sqrt(total))


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Scale all blocks in place so the global norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    norm = global_grad_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for name in sorted(grads):
            grads[name] *= scale
    return norm
