"""Training losses paired with their gradients w.r.t. the head output.

Both return ``(loss, d_head)`` where ``d_head`` feeds ``encoder.backward``
directly: for the classifier that is the gradient w.r.t. the output
probabilities (the softmax Jacobian lives in the encoder's backward pass),
for the regressor w.r.t. the raw outputs.  Losses are means over the batch.
"""

from __future__ import annotations

import numpy as np

_P_FLOOR = 1e-300


def cross_entropy(probs: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood of integer ``labels`` under ``probs``."""
    p = np.asarray(probs, dtype=np.float64)
    squeeze = p.ndim == 1
    if squeeze:
        p = p[None, :]
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, k = p.shape
    if y.shape != (n,):
        raise ValueError(f"labels shape {y.shape} != ({n},)")
    if np.any(y < 0) or np.any(y >= k):
        raise ValueError("label out of range")
    picked = np.maximum(p[np.arange(n), y], _P_FLOOR)
    loss = -np.mean(np.log(picked))
    d = np.zeros_like(p)
    d[np.arange(n), y] = -1.0 / (picked * n)
    if squeeze:
        d = d[0]
    return loss, d


def mse(outputs: np.ndarray, targets: np.ndarray):
    """Mean squared error over every output entry."""
    out = np.asarray(outputs, dtype=np.float64)
    tgt = np.asarray(targets, dtype=np.float64)
    if out.shape != tgt.shape:
        raise ValueError(f"shape mismatch: outputs {out.shape}, targets {tgt.shape}")
    diff = out - tgt
    loss = np.mean(diff * diff)
    d = 2.0 * diff / diff.size
    return loss, d
