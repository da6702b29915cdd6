"""Minimal recurrent network stack (numpy, float64, exact BPTT)."""

from .adam import (
    AdamState,
    NonFiniteGradientError,
    adam_init,
    adam_step,
    clip_grad_norm,
    global_grad_norm,
)
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
from .encoder import (
    CoreStepper,
    EncodeResult,
    EncoderConfig,
    EncoderParams,
    Tape,
    TapeConsumedError,
    backward,
    encode_sequence,
    init_encoder,
    softmax,
    zero_grads,
)
from .gradcheck import GradCheckReport, encoder_grad_check, grad_check
from .losses import cross_entropy, mse

__all__ = [
    "AdamState",
    "NonFiniteGradientError",
    "adam_init",
    "adam_step",
    "clip_grad_norm",
    "global_grad_norm",
    "GRU_PARAM_NAMES",
    "LSTM_PARAM_NAMES",
    "CellParams",
    "gru_step",
    "gru_step_backward",
    "init_cell",
    "lstm_step",
    "lstm_step_backward",
    "CoreStepper",
    "EncodeResult",
    "EncoderConfig",
    "EncoderParams",
    "Tape",
    "TapeConsumedError",
    "backward",
    "encode_sequence",
    "init_encoder",
    "softmax",
    "zero_grads",
    "GradCheckReport",
    "encoder_grad_check",
    "grad_check",
    "cross_entropy",
    "mse",
]
