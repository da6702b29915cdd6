"""Supervised sequence decoders: hypothesis classifier and error-probability monitor.

Both are the same recurrent encoder (see :mod:`asht.nn`) with different
heads: the inference decoder classifies which hypothesis generated a
completed episode (cross-entropy), the monitor regresses a scalar statistic
of the posterior — typically the error probability gamma — from a prefix
(mean squared error).  Training is plain Adam over length-bucketed
mini-batches with best-validation-loss model selection.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .data import SequenceDataset, encode_pairs, iter_batches, split_dataset
from .nn import (
    CoreStepper,
    EncoderConfig,
    EncoderParams,
    adam_init,
    adam_step,
    backward,
    cross_entropy,
    encode_sequence,
    init_encoder,
    mse,
)

MODEL_KINDS = ("inference", "monitor")


@dataclass(frozen=True)
class DecoderArch:
    """Architecture knobs; alphabet-dependent sizes come from the dataset."""

    cell: str = "gru"
    hidden_size: int = 64
    n_layers: int = 2
    bidirectional: bool = False
    dropout: float = 0.0


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    val_fraction: float = 0.1
    test_fraction: float = 0.1


@dataclass
class MetricReport:
    kind: str
    n: int
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    mae: float | None = None


@dataclass
class SequenceModel:
    """A trained decoder: encoder parameters plus its input alphabet."""

    enc: EncoderParams
    n_actions: int
    n_observations: int
    kind: str

    def encode_input(self, actions, observations) -> np.ndarray:
        return encode_pairs(actions, observations, self.n_actions, self.n_observations)


@dataclass
class TrainResult:
    model: SequenceModel
    report: MetricReport
    history: list = field(default_factory=list)


def _eval_loss(enc: EncoderParams, ds: SequenceDataset, batch_size: int, loss_fn, reshape) -> float:
    total, count = 0.0, 0
    for x, y in iter_batches(ds, batch_size):
        res = encode_sequence(enc, x)
        loss, _ = loss_fn(res.head, reshape(y))
        total += loss * len(y)
        count += len(y)
    return total / count


def _forward_dataset(enc: EncoderParams, ds: SequenceDataset, batch_size: int = 256) -> np.ndarray:
    """Eval-mode head outputs for every item, aligned with item order."""
    out = np.empty((len(ds), enc.config.n_out))
    by_length = {}
    for idx, item in enumerate(ds.items):
        by_length.setdefault(item.length, []).append(idx)
    for length in sorted(by_length):
        idxs = by_length[length]
        for start in range(0, len(idxs), batch_size):
            chunk = idxs[start:start + batch_size]
            x = np.stack([
                encode_pairs(ds.items[i].actions, ds.items[i].observations,
                             ds.n_actions, ds.n_observations)
                for i in chunk
            ])
            out[chunk] = encode_sequence(enc, x).head
    return out


def _train(dataset, val_dataset, test_dataset, enc_cfg: EncoderConfig,
           cfg: TrainingConfig, rng: np.random.Generator, loss_fn, reshape):
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if val_dataset is None or test_dataset is None:
        split_seed = int(rng.integers(2 ** 32))
        train_ds, auto_val, auto_test = split_dataset(
            dataset, cfg.val_fraction, cfg.test_fraction, split_seed
        )
        val_dataset = val_dataset or auto_val
        test_dataset = test_dataset or auto_test
    else:
        train_ds = dataset
    if len(train_ds) == 0:
        raise ValueError("empty training split")

    enc = init_encoder(enc_cfg, rng)
    state = adam_init(enc.params, lr=cfg.lr)
    best_val = np.inf
    best_params = copy.deepcopy(enc.params)
    history = []
    for epoch in range(cfg.epochs):
        total, count = 0.0, 0
        for x, y in iter_batches(train_ds, cfg.batch_size, rng):
            res = encode_sequence(enc, x, mode="train", rng=rng)
            loss, d_head = loss_fn(res.head, reshape(y))
            grads = backward(enc, res.tape, d_head)
            adam_step(enc.params, grads, state)
            total += loss * len(y)
            count += len(y)
        train_loss = total / count
        if len(val_dataset) > 0:
            val_loss = _eval_loss(enc, val_dataset, cfg.batch_size, loss_fn, reshape)
        else:
            val_loss = train_loss
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if val_loss < best_val:
            best_val = val_loss
            best_params = copy.deepcopy(enc.params)
    enc.params = best_params
    return enc, test_dataset, history


def train_inference(dataset: SequenceDataset, arch: DecoderArch = DecoderArch(),
                    cfg: TrainingConfig = TrainingConfig(),
                    rng: np.random.Generator | None = None,
                    val_dataset: SequenceDataset | None = None,
                    test_dataset: SequenceDataset | None = None) -> TrainResult:
    """Train the hypothesis classifier; report held-out macro P/R/F1."""
    if dataset.label_kind != "class":
        raise ValueError("inference decoder needs a class-labeled dataset")
    rng = rng if rng is not None else np.random.default_rng(0)
    enc_cfg = EncoderConfig(
        cell=arch.cell, input_size=dataset.feature_size, hidden_size=arch.hidden_size,
        n_out=dataset.n_classes, head="classifier", n_layers=arch.n_layers,
        bidirectional=arch.bidirectional, dropout=arch.dropout,
    )
    enc, test_ds, history = _train(
        dataset, val_dataset, test_dataset, enc_cfg, cfg, rng,
        cross_entropy, lambda y: y,
    )
    model = SequenceModel(enc=enc, n_actions=dataset.n_actions,
                          n_observations=dataset.n_observations, kind="inference")
    if len(test_ds) > 0:
        preds = np.argmax(_forward_dataset(enc, test_ds), axis=1)
        report = eval_metrics(preds, test_ds.labels(), "class")
    else:
        report = MetricReport(kind="class", n=0)
    return TrainResult(model=model, report=report, history=history)


def train_monitor(dataset: SequenceDataset, arch: DecoderArch = DecoderArch(),
                  cfg: TrainingConfig = TrainingConfig(),
                  rng: np.random.Generator | None = None,
                  val_dataset: SequenceDataset | None = None,
                  test_dataset: SequenceDataset | None = None) -> TrainResult:
    """Train the scalar monitor; report held-out mean absolute error."""
    if dataset.label_kind != "scalar":
        raise ValueError("monitor needs a scalar-labeled dataset")
    rng = rng if rng is not None else np.random.default_rng(0)
    enc_cfg = EncoderConfig(
        cell=arch.cell, input_size=dataset.feature_size, hidden_size=arch.hidden_size,
        n_out=1, head="regressor", n_layers=arch.n_layers,
        bidirectional=arch.bidirectional, dropout=arch.dropout,
    )
    enc, test_ds, history = _train(
        dataset, val_dataset, test_dataset, enc_cfg, cfg, rng,
        mse, lambda y: y.reshape(-1, 1),
    )
    model = SequenceModel(enc=enc, n_actions=dataset.n_actions,
                          n_observations=dataset.n_observations, kind="monitor")
    if len(test_ds) > 0:
        preds = _forward_dataset(enc, test_ds)[:, 0]
        report = eval_metrics(preds, test_ds.labels(), "scalar")
    else:
        report = MetricReport(kind="scalar", n=0)
    return TrainResult(model=model, report=report, history=history)


def classify(model: SequenceModel, actions, observations):
    """(hypothesis, class probabilities); argmax ties break to the smallest index."""
    if model.kind != "inference":
        raise ValueError(f"classify needs an inference model, got kind {model.kind!r}")
    x = model.encode_input(actions, observations)
    probs = encode_sequence(model.enc, x).head
    return int(np.argmax(probs)), probs


def classify_batch(model: SequenceModel, actions: np.ndarray, observations: np.ndarray) -> np.ndarray:
    """Predicted hypothesis per row of equal-length (B, T) action/observation arrays."""
    if model.kind != "inference":
        raise ValueError(f"classify_batch needs an inference model, got kind {model.kind!r}")
    actions = np.asarray(actions)
    observations = np.asarray(observations)
    x = np.stack([model.encode_input(a, y) for a, y in zip(actions, observations)])
    probs = encode_sequence(model.enc, x).head
    return np.argmax(probs, axis=1)


def monitor_score(model: SequenceModel, actions, observations) -> float:
    """Scalar estimate (e.g. error probability) for one sequence prefix."""
    if model.kind != "monitor":
        raise ValueError(f"monitor_score needs a monitor model, got kind {model.kind!r}")
    x = model.encode_input(actions, observations)
    return float(encode_sequence(model.enc, x).head[0])


def monitor_stepper(model: SequenceModel, batch_size: int) -> CoreStepper:
    """O(1)-per-step prefix scorer for unidirectional monitors."""
    if model.kind != "monitor":
        raise ValueError("stepper is for monitor models")
    return CoreStepper(model.enc, batch_size)


def eval_metrics(predictions, labels, kind: str) -> MetricReport:
    """Macro precision/recall/F1 for class labels, MAE for scalars."""
    preds = np.asarray(predictions)
    labs = np.asarray(labels)
    if preds.shape != labs.shape or preds.ndim != 1:
        raise ValueError(f"predictions {preds.shape} and labels {labs.shape} must be equal-length 1-d")
    if preds.size == 0:
        raise ValueError("empty inputs")
    if kind == "scalar":
        return MetricReport(kind=kind, n=preds.size, mae=float(np.mean(np.abs(preds - labs))))
    if kind != "class":
        raise ValueError(f"kind must be 'class' or 'scalar', got {kind!r}")
    classes = sorted(set(np.unique(preds)) | set(np.unique(labs)))
    precisions, recalls, f1s = [], [], []
    for cls in classes:
        tp = int(np.sum((preds == cls) & (labs == cls)))
        fp = int(np.sum((preds == cls) & (labs != cls)))
        fn = int(np.sum((preds != cls) & (labs == cls)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        precisions.append(p)
        recalls.append(r)
        f1s.append(f)
    return MetricReport(
        kind=kind, n=preds.size,
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
        f1=float(np.mean(f1s)),
    )
