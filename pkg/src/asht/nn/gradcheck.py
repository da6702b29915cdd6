"""Central-difference verification of analytic gradients.

Every parameter entry is perturbed by +-h and the finite-difference slope is
compared against the analytic gradient block by block.  The error measure is
|analytic - numeric| / max(|analytic|, |numeric|, 0.001): the floor keeps the
ratio meaningful where the true gradient is smaller than the cancellation
noise of central differences (~1e-10 at unit loss scale).

Intended for models up to ~10^4 parameters; cost is two loss evaluations per
parameter entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderParams, backward, encode_sequence
from .losses import cross_entropy, mse

_DENOM_FLOOR = 1e-3


@dataclass
class GradCheckReport:
    block_errors: dict
    tolerance: float

    @property
    def worst_block(self) -> str:
        return max(self.block_errors, key=lambda k: self.block_errors[k])

    @property
    def worst_error(self) -> float:
        return self.block_errors[self.worst_block]

    @property
    def failed_blocks(self) -> list:
        return sorted(k for k, v in self.block_errors.items() if v >= self.tolerance)

    @property
    def passed(self) -> bool:
        return not self.failed_blocks

    def __str__(self) -> str:
        lines = [
            f"gradient check: {'PASS' if self.passed else 'FAIL'} "
            f"(tolerance {self.tolerance:g}, worst block {self.worst_block!r} "
            f"at {self.worst_error:.3e})"
        ]
        for name in sorted(self.block_errors):
            flag = "" if self.block_errors[name] < self.tolerance else "  <-- FAIL"
            lines.append(f"  {name}: {self.block_errors[name]:.3e}{flag}")
        return "\n".join(lines)


def grad_check(loss_and_grads, params: dict, h: float = 1e-5,
               tolerance: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``loss_and_grads(params) -> (loss, grads)`` must be deterministic — any
    internal randomness (dropout masks) has to be replayed identically on
    every call, or the finite differences measure the noise instead of the
    slope.
    """
    _, analytic = loss_and_grads(params)
    block_errors = {}
    for name in sorted(params):
        arr = params[name]
        a_block = analytic[name]
        worst = 0.0
        flat = arr.reshape(-1)
        a_flat = np.asarray(a_block, dtype=np.float64).reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            loss_plus, _ = loss_and_grads(params)
            flat[idx] = orig - h
            loss_minus, _ = loss_and_grads(params)
            flat[idx] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            denom = max(abs(a_flat[idx]), abs(numeric), _DENOM_FLOOR)
            worst = max(worst, abs(a_flat[idx] - numeric) / denom)
        block_errors[name] = worst
    return GradCheckReport(block_errors=block_errors, tolerance=tolerance)


def encoder_grad_check(enc: EncoderParams, inputs: np.ndarray, target,
                       h: float = 1e-5, tolerance: float = 1e-4,
                       dropout_seed: int = 0, corrupt_block: str | None = None) -> GradCheckReport:
    """Gradient-check an encoder on one sample (or batch).

    The loss is cross-entropy for a classifier head and mean squared error
    for a regressor.  Dropout, if configured, is replayed from
    ``dropout_seed`` on every evaluation.  ``corrupt_block`` deliberately
    offsets that block's analytic gradient — a self-test hook proving the
    checker localizes a broken gradient path.
    """

    def loss_and_grads(params: dict):
        live = EncoderParams(config=enc.config, params=params)
        rng = np.random.default_rng(dropout_seed)
        res = encode_sequence(live, inputs, mode="train", rng=rng)
        if enc.config.head == "classifier":
            loss, d_head = cross_entropy(res.head, target)
        else:
            loss, d_head = mse(res.head, target)
        grads = backward(live, res.tape, d_head)
        if corrupt_block is not None:
            grads[corrupt_block] = grads[corrupt_block] + 1.0
        return loss, grads

    return grad_check(loss_and_grads, enc.params, h=h, tolerance=tolerance)
