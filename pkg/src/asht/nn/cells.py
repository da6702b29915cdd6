"""GRU and LSTM cells with exact reverse-mode gradients, in plain numpy.

Conventions (frozen; the literature varies):

GRU:   r = sigmoid(x W_r' + h U_r' + b_r)
       z = sigmoid(x W_z' + h U_z' + b_z)
       n = tanh(x W_n' + b_n + r * (h U_n' + c_n))
       h' = (1 - z) * n + z * h

LSTM:  i, f, o = sigmoid(x W_*' + h U_*' + b_*),  g = tanh(x W_g' + h U_g' + b_g)
       c' = f * c + i * g
       h' = o * tanh(c')

All step functions are batched: ``x`` is (B, input_size) and hidden states are
(B, hidden_size).  Weight matrices W are (hidden, input), recurrent matrices U
are (hidden, hidden), biases are (hidden,); everything is float64.  Gradients
are accumulated into flat name->array dicts so the optimizer and checkpoint
code can treat any model as a single namespace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

GRU_PARAM_NAMES = ("w_r", "u_r", "b_r", "w_z", "u_z", "b_z", "w_n", "u_n", "b_n", "c_n")
LSTM_PARAM_NAMES = (
    "w_i", "u_i", "b_i",
    "w_f", "u_f", "b_f",
    "w_g", "u_g", "b_g",
    "w_o", "u_o", "b_o",
)


@dataclass(frozen=True)
class CellParams:
    """One recurrent cell: kind tag, sizes, and its named weight arrays."""

    kind: str
    input_size: int
    hidden_size: int
    w: dict

    def __post_init__(self):
        names = GRU_PARAM_NAMES if self.kind == "gru" else LSTM_PARAM_NAMES
        if self.kind not in ("gru", "lstm"):
            raise ValueError(f"unknown cell kind {self.kind!r}")
        if set(self.w) != set(names):
            raise ValueError(f"{self.kind} cell needs arrays {names}, got {sorted(self.w)}")
        for name, arr in self.w.items():
            expected = self._shape(name)
            if arr.shape != expected:
                raise ValueError(f"{name}: expected shape {expected}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite entries")

    def _shape(self, name: str) -> tuple:
        if name.startswith("w_"):
            return (self.hidden_size, self.input_size)
        if name.startswith("u_"):
            return (self.hidden_size, self.hidden_size)
        return (self.hidden_size,)


def init_cell(kind: str, input_size: int, hidden_size: int, rng: np.random.Generator) -> CellParams:
    """Uniform(-1/sqrt(hidden), +1/sqrt(hidden)) weights, zero biases."""
    bound = 1.0 / np.sqrt(hidden_size)
    names = GRU_PARAM_NAMES if kind == "gru" else LSTM_PARAM_NAMES
    w = {}
    for name in names:
        if name.startswith(("w_", "u_")):
            shape = (hidden_size, input_size) if name.startswith("w_") else (hidden_size, hidden_size)
            w[name] = rng.uniform(-bound, bound, size=shape)
        else:
            w[name] = np.zeros(hidden_size)
    return CellParams(kind=kind, input_size=input_size, hidden_size=hidden_size, w=w)


def _check_step_inputs(p: CellParams, x: np.ndarray, h: np.ndarray) -> None:
    if x.ndim != 2 or h.ndim != 2 or x.shape[0] != h.shape[0]:
        raise ValueError(f"batched inputs required: x {x.shape}, h {h.shape}")
    if x.shape[1] != p.input_size or h.shape[1] != p.hidden_size:
        raise ValueError(
            f"size mismatch: cell ({p.input_size}, {p.hidden_size}), "
            f"x {x.shape}, h {h.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")


def gru_step(p: CellParams, x: np.ndarray, h: np.ndarray):
    """One GRU step.  Returns (h_new, cache for the backward pass)."""
    _check_step_inputs(p, x, h)
    w = p.w
    r = sigmoid(x @ w["w_r"].T + h @ w["u_r"].T + w["b_r"])
    z = sigmoid(x @ w["w_z"].T + h @ w["u_z"].T + w["b_z"])
    rec_n = h @ w["u_n"].T + w["c_n"]
    n = np.tanh(x @ w["w_n"].T + w["b_n"] + r * rec_n)
    h_new = (1.0 - z) * n + z * h
    cache = (x, h, r, z, n, rec_n)
    return h_new, cache


def gru_step_backward(p: CellParams, cache, dh_new: np.ndarray, grads: dict, prefix: str):
    """Exact gradients of a GRU step.

    Accumulates parameter gradients into ``grads`` under ``prefix + name`` and
    returns (dx, dh_prev).
    """
    x, h, r, z, n, rec_n = cache
    w = p.w
    dz = dh_new * (h - n)
    da_z = dz * z * (1.0 - z)
    dn = dh_new * (1.0 - z)
    da_n = dn * (1.0 - n * n)
    dr = da_n * rec_n
    da_r = dr * r * (1.0 - r)
    da_n_r = da_n * r

    grads[prefix + "w_r"] += da_r.T @ x
    grads[prefix + "u_r"] += da_r.T @ h
    grads[prefix + "b_r"] += da_r.sum(axis=0)
    grads[prefix + "w_z"] += da_z.T @ x
    grads[prefix + "u_z"] += da_z.T @ h
    grads[prefix + "b_z"] += da_z.sum(axis=0)
    grads[prefix + "w_n"] += da_n.T @ x
    grads[prefix + "b_n"] += da_n.sum(axis=0)
    grads[prefix + "u_n"] += da_n_r.T @ h
    grads[prefix + "c_n"] += da_n_r.sum(axis=0)

    dx = da_r @ w["w_r"] + da_z @ w["w_z"] + da_n @ w["w_n"]
    dh_prev = (
        da_r @ w["u_r"] + da_z @ w["u_z"] + da_n_r @ w["u_n"] + dh_new * z
    )
    return dx, dh_prev


def lstm_step(p: CellParams, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """One LSTM step.  Returns (h_new, c_new, cache)."""
    _check_step_inputs(p, x, h)
    if c.shape != h.shape:
        raise ValueError(f"cell state shape {c.shape} != hidden shape {h.shape}")
    w = p.w
    i = sigmoid(x @ w["w_i"].T + h @ w["u_i"].T + w["b_i"])
    f = sigmoid(x @ w["w_f"].T + h @ w["u_f"].T + w["b_f"])
    g = np.tanh(x @ w["w_g"].T + h @ w["u_g"].T + w["b_g"])
    o = sigmoid(x @ w["w_o"].T + h @ w["u_o"].T + w["b_o"])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    cache = (x, h, c, i, f, g, o, c_new)
    return h_new, c_new, cache


def lstm_step_backward(
    p: CellParams, cache, dh_new: np.ndarray, dc_new: np.ndarray, grads: dict, prefix: str
):
    """Exact gradients of an LSTM step; returns (dx, dh_prev, dc_prev)."""
    x, h, c, i, f, g, o, c_new = cache
    w = p.w
    tc = np.tanh(c_new)
    do = dh_new * tc
    da_o = do * o * (1.0 - o)
    dc_total = dc_new + dh_new * o * (1.0 - tc * tc)
    da_f = dc_total * c * f * (1.0 - f)
    da_i = dc_total * g * i * (1.0 - i)
    da_g = dc_total * i * (1.0 - g * g)

    for da, gate in ((da_i, "i"), (da_f, "f"), (da_g, "g"), (da_o, "o")):
        grads[prefix + f"w_{gate}"] += da.T @ x
        grads[prefix + f"u_{gate}"] += da.T @ h
        grads[prefix + f"b_{gate}"] += da.sum(axis=0)

    dx = da_i @ w["w_i"] + da_f @ w["w_f"] + da_g @ w["w_g"] + da_o @ w["w_o"]
    dh_prev = da_i @ w["u_i"] + da_f @ w["u_f"] + da_g @ w["u_g"] + da_o @ w["u_o"]
    dc_prev = dc_total * f
    return dx, dh_prev, dc_prev
