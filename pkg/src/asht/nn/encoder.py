"""Stacked (optionally bidirectional) recurrent sequence encoder.

Architecture: ``n_layers`` recurrent layers (GRU or LSTM); bidirectional
layers run the same layer input forward and reversed in time and concatenate
the two hidden streams per step.  Inverted dropout is applied between stacked
layers only, and only in train mode.  The top layer's per-step features are
mean-pooled over time and fed to an affine head — softmax for a classifier,
identity for a regressor.

All parameters live in one flat ``name -> float64 array`` dict
(``l{layer}.{f|b}.{gate}``, ``head.w``, ``head.b``) so the optimizer,
gradient checker and checkpoint writer share a single namespace.

``encode_sequence`` in train mode records a :class:`Tape`; ``backward``
consumes it exactly once and returns gradients for every named parameter.
Mean pooling is maintained as a running sum, which lets :class:`CoreStepper`
score every prefix of a stream in O(1) extra work per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cells import (
    GRU_PARAM_NAMES,
    LSTM_PARAM_NAMES,
    CellParams,
    gru_step,
    gru_step_backward,
    init_cell,
    lstm_step,
    lstm_step_backward,
)

HEAD_KINDS = ("classifier", "regressor")


class TapeConsumedError(RuntimeError):
    """Raised when a tape is handed to ``backward`` a second time."""


@dataclass(frozen=True)
class EncoderConfig:
    cell: str
    input_size: int
    hidden_size: int
    n_out: int
    head: str
    n_layers: int = 1
    bidirectional: bool = False
    dropout: float = 0.0

    def __post_init__(self):
        if self.cell not in ("gru", "lstm"):
            raise ValueError(f"unknown cell kind {self.cell!r}")
        if self.head not in HEAD_KINDS:
            raise ValueError(f"head must be one of {HEAD_KINDS}, got {self.head!r}")
        if min(self.input_size, self.hidden_size, self.n_out, self.n_layers) < 1:
            raise ValueError("sizes and layer count must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def directions(self) -> tuple:
        return ("f", "b") if self.bidirectional else ("f",)

    @property
    def feature_size(self) -> int:
        """Width of one layer's concatenated per-step output."""
        return self.hidden_size * len(self.directions)

    def layer_input_size(self, layer: int) -> int:
        return self.input_size if layer == 0 else self.feature_size


@dataclass
class EncoderParams:
    config: EncoderConfig
    params: dict

    def cell_view(self, layer: int, direction: str) -> CellParams:
        """A CellParams sharing (not copying) this encoder's arrays."""
        prefix = f"l{layer}.{direction}."
        names = GRU_PARAM_NAMES if self.config.cell == "gru" else LSTM_PARAM_NAMES
        w = {name: self.params[prefix + name] for name in names}
        return CellParams(
            kind=self.config.cell,
            input_size=self.config.layer_input_size(layer),
            hidden_size=self.config.hidden_size,
            w=w,
        )


def init_encoder(config: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    """Uniform(+-1/sqrt(hidden)) weights everywhere, zero biases."""
    params = {}
    for layer in range(config.n_layers):
        for direction in config.directions:
            cell = init_cell(config.cell, config.layer_input_size(layer), config.hidden_size, rng)
            for name, arr in cell.w.items():
                params[f"l{layer}.{direction}.{name}"] = arr
    bound = 1.0 / np.sqrt(config.hidden_size)
    params["head.w"] = rng.uniform(-bound, bound, size=(config.n_out, config.feature_size))
    params["head.b"] = np.zeros(config.n_out)
    return EncoderParams(config=config, params=params)


def zero_grads(enc: EncoderParams) -> dict:
    return {name: np.zeros_like(arr) for name, arr in enc.params.items()}


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Tape:
    """Everything the backward pass needs; single use."""

    squeeze: bool
    layer_inputs: list = field(default_factory=list)
    caches: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    pooled: np.ndarray = None
    probs: np.ndarray = None
    n_steps: int = 0
    consumed: bool = False


@dataclass
class EncodeResult:
    outputs: np.ndarray
    pooled: np.ndarray
    head: np.ndarray
    tape: Tape


def _run_direction(cell: CellParams, seq: np.ndarray, record: bool):
    """Run one direction over (B, T, in) inputs already in processing order."""
    B, T, _ = seq.shape
    H = cell.hidden_size
    h = np.zeros((B, H))
    c = np.zeros((B, H)) if cell.kind == "lstm" else None
    outs = np.empty((B, T, H))
    caches = [] if record else None
    for t in range(T):
        if cell.kind == "gru":
            h, cache = gru_step(cell, seq[:, t, :], h)
        else:
            h, c, cache = lstm_step(cell, seq[:, t, :], h, c)
        outs[:, t, :] = h
        if record:
            caches.append(cache)
    return outs, caches


def _backprop_direction(cell: CellParams, caches, d_outs: np.ndarray, grads: dict, prefix: str):
    """Reverse-time pass for one direction; d_outs in processing order."""
    B, T, _ = d_outs.shape
    H = cell.hidden_size
    dh = np.zeros((B, H))
    dc = np.zeros((B, H)) if cell.kind == "lstm" else None
    d_seq = np.empty((B, T, cell.input_size))
    for t in range(T - 1, -1, -1):
        dh_total = d_outs[:, t, :] + dh
        if cell.kind == "gru":
            dx, dh = gru_step_backward(cell, caches[t], dh_total, grads, prefix)
        else:
            dx, dh, dc = lstm_step_backward(cell, caches[t], dh_total, dc, grads, prefix)
        d_seq[:, t, :] = dx
    return d_seq


def encode_sequence(
    enc: EncoderParams,
    inputs: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> EncodeResult:
    """Encode one sequence (T, in) or a batch (B, T, in).

    Returns per-step top-layer features, the mean-pooled vector, and the head
    output (class probabilities or raw regression values).  In train mode the
    result carries a tape for ``backward``; dropout (if configured) requires
    ``rng`` and is skipped entirely in eval mode.
    """
    cfg = enc.config
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(inputs, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None, :, :]
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] != cfg.input_size:
        raise ValueError(
            f"inputs must be (T, {cfg.input_size}) or (B, T, {cfg.input_size}), got {np.asarray(inputs).shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite inputs")
    use_dropout = mode == "train" and cfg.dropout > 0.0 and cfg.n_layers > 1
    if use_dropout and rng is None:
        raise ValueError("train-mode dropout requires an rng")

    record = mode == "train"
    B, T, _ = x.shape
    tape = Tape(squeeze=squeeze, n_steps=T)
    layer_in = x
    for layer in range(cfg.n_layers):
        if record:
            tape.layer_inputs.append(layer_in)
        dir_outs = []
        layer_caches = {}
        for direction in cfg.directions:
            cell = enc.cell_view(layer, direction)
            seq = layer_in if direction == "f" else layer_in[:, ::-1, :]
            outs, caches = _run_direction(cell, seq, record)
            if direction == "b":
                outs = outs[:, ::-1, :]
            dir_outs.append(outs)
            if record:
                layer_caches[direction] = caches
        if record:
            tape.caches.append(layer_caches)
        out = dir_outs[0] if len(dir_outs) == 1 else np.concatenate(dir_outs, axis=2)
        if layer < cfg.n_layers - 1:
            mask = None
            if use_dropout:
                keep = 1.0 - cfg.dropout
                mask = (rng.random(out.shape) < keep) / keep
                out = out * mask
            if record:
                tape.masks.append(mask)
        layer_in = out

    pooled = layer_in.mean(axis=1)
    logits = pooled @ enc.params["head.w"].T + enc.params["head.b"]
    if cfg.head == "classifier":
        head = softmax(logits)
        if record:
            tape.probs = head
    else:
        head = logits
    if record:
        tape.pooled = pooled
    outputs = layer_in
    if squeeze:
        outputs, pooled, head = outputs[0], pooled[0], head[0]
    return EncodeResult(outputs=outputs, pooled=pooled, head=head, tape=tape if record else None)


def backward(enc: EncoderParams, tape: Tape, d_head: np.ndarray) -> dict:
    """Gradients of a scalar loss given d loss / d head_output.

    For a classifier head ``d_head`` is taken with respect to the output
    probabilities; the softmax Jacobian is applied here.  The tape is consumed
    and cannot be reused.
    """
    if tape is None:
        raise ValueError("backward needs a tape from a train-mode forward pass")
    if tape.consumed:
        raise TapeConsumedError("tape already consumed by a previous backward pass")
    tape.consumed = True

    cfg = enc.config
    d_head = np.asarray(d_head, dtype=np.float64)
    if tape.squeeze:
        d_head = d_head[None, :]
    B = tape.pooled.shape[0]
    if d_head.shape != (B, cfg.n_out):
        raise ValueError(f"d_head shape {d_head.shape} != {(B, cfg.n_out)}")

    if cfg.head == "classifier":
        p = tape.probs
        d_logits = p * (d_head - np.sum(d_head * p, axis=1, keepdims=True))
    else:
        d_logits = d_head

    grads = zero_grads(enc)
    grads["head.w"] += d_logits.T @ tape.pooled
    grads["head.b"] += d_logits.sum(axis=0)
    d_pooled = d_logits @ enc.params["head.w"]

    T = tape.n_steps
    d_out = np.repeat(d_pooled[:, None, :] / T, T, axis=1)
    for layer in range(cfg.n_layers - 1, -1, -1):
        if layer < cfg.n_layers - 1 and tape.masks[layer] is not None:
            d_out = d_out * tape.masks[layer]
        H = cfg.hidden_size
        d_in = None
        for k, direction in enumerate(cfg.directions):
            cell = enc.cell_view(layer, direction)
            d_block = d_out[:, :, k * H:(k + 1) * H]
            if direction == "b":
                d_block = d_block[:, ::-1, :]
            d_seq = _backprop_direction(
                cell, tape.caches[layer][direction], d_block, grads, f"l{layer}.{direction}."
            )
            if direction == "b":
                d_seq = d_seq[:, ::-1, :]
            d_in = d_seq if d_in is None else d_in + d_seq
        d_out = d_in
    return grads


class CoreStepper:
    """Incremental eval-mode encoder over a growing batch of streams.

    Feeds one step at a time through a unidirectional stack, keeps the
    running sum of top-layer features, and returns the head output for the
    prefix seen so far — O(hidden^2) per step regardless of prefix length.
    """

    def __init__(self, enc: EncoderParams, batch_size: int):
        cfg = enc.config
        if cfg.bidirectional:
            raise ValueError("incremental stepping requires a unidirectional encoder")
        self.enc = enc
        self.cells = [enc.cell_view(layer, "f") for layer in range(cfg.n_layers)]
        self.h = [np.zeros((batch_size, cfg.hidden_size)) for _ in range(cfg.n_layers)]
        self.c = (
            [np.zeros((batch_size, cfg.hidden_size)) for _ in range(cfg.n_layers)]
            if cfg.cell == "lstm"
            else None
        )
        self.sum_top = np.zeros((batch_size, cfg.feature_size))
        self.t = 0

    def step(self, x: np.ndarray) -> np.ndarray:
        """Consume one observation per stream; return head output per stream."""
        cfg = self.enc.config
        layer_in = np.asarray(x, dtype=np.float64)
        for layer, cell in enumerate(self.cells):
            if cfg.cell == "gru":
                self.h[layer], _ = gru_step(cell, layer_in, self.h[layer])
            else:
                self.h[layer], self.c[layer], _ = lstm_step(
                    cell, layer_in, self.h[layer], self.c[layer]
                )
            layer_in = self.h[layer]
        self.sum_top += layer_in
        self.t += 1
        pooled = self.sum_top / self.t
        logits = pooled @ self.enc.params["head.w"].T + self.enc.params["head.b"]
        return softmax(logits) if cfg.head == "classifier" else logits
