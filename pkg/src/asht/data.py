"""Labeled sequence datasets for the supervised decoders.

A dataset item is one episode's realized (action, observation) pairs plus a
single label taken at the episode's final step: the true hypothesis or the
running estimate for classifiers, an error/confidence statistic for
regressors.  Steps are fed to encoders as one-hot(action) + one-hot
(observation) vectors.

File format: line-delimited JSON, one record per line,
``{"id": int, "actions": [ints], "observations": [ints], "label": number,
"label_kind": "class"|"scalar"}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .belief import confidence_from_rho
from .engine import BatchBeliefTracker, EpisodeBatch
from .env import ObservationModel

LABEL_KINDS = ("class", "scalar")


@dataclass(frozen=True)
class SequenceItem:
    item_id: int
    actions: np.ndarray
    observations: np.ndarray
    label: float

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass
class SequenceDataset:
    items: list
    label_kind: str
    n_actions: int
    n_observations: int
    n_classes: int | None = None
    split: str = ""

    def __post_init__(self):
        if self.label_kind not in LABEL_KINDS:
            raise ValueError(f"label_kind must be one of {LABEL_KINDS}, got {self.label_kind!r}")
        if self.label_kind == "class" and self.n_classes is None:
            raise ValueError("class-labeled dataset needs n_classes")
        for item in self.items:
            if item.length < 1:
                raise ValueError(f"item {item.item_id}: empty sequence")
            if len(item.observations) != item.length:
                raise ValueError(f"item {item.item_id}: action/observation length mismatch")
            if np.any(item.actions < 0) or np.any(item.actions >= self.n_actions):
                raise ValueError(f"item {item.item_id}: action outside alphabet")
            if np.any(item.observations < 0) or np.any(item.observations >= self.n_observations):
                raise ValueError(f"item {item.item_id}: observation outside alphabet")
            if self.label_kind == "class":
                if item.label != int(item.label) or not 0 <= item.label < self.n_classes:
                    raise ValueError(f"item {item.item_id}: class label {item.label} out of range")
            elif not np.isfinite(item.label):
                raise ValueError(f"item {item.item_id}: non-finite label")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def feature_size(self) -> int:
        return self.n_actions + self.n_observations

    def labels(self) -> np.ndarray:
        dtype = np.int64 if self.label_kind == "class" else np.float64
        return np.array([item.label for item in self.items], dtype=dtype)


def encode_pairs(actions, observations, n_actions: int, n_observations: int) -> np.ndarray:
    """One-hot(action) + one-hot(observation) per step -> (T, |A|+|Y|)."""
    a = np.asarray(actions, dtype=np.int64)
    y = np.asarray(observations, dtype=np.int64)
    if a.shape != y.shape or a.ndim != 1 or a.size < 1:
        raise ValueError(f"need matching 1-d actions/observations, got {a.shape} and {y.shape}")
    if np.any(a < 0) or np.any(a >= n_actions):
        raise ValueError("action outside alphabet")
    if np.any(y < 0) or np.any(y >= n_observations):
        raise ValueError("observation outside alphabet")
    T = a.size
    out = np.zeros((T, n_actions + n_observations))
    out[np.arange(T), a] = 1.0
    out[np.arange(T), n_actions + y] = 1.0
    return out


def encode_item(item: SequenceItem, ds: SequenceDataset) -> np.ndarray:
    return encode_pairs(item.actions, item.observations, ds.n_actions, ds.n_observations)


def save_dataset(ds: SequenceDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in ds.items:
            record = {
                "id": int(item.item_id),
                "actions": [int(v) for v in item.actions],
                "observations": [int(v) for v in item.observations],
                "label": int(item.label) if ds.label_kind == "class" else float(item.label),
                "label_kind": ds.label_kind,
            }
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def load_dataset(path, n_actions: int | None = None, n_observations: int | None = None,
                 n_classes: int | None = None) -> SequenceDataset:
    """Read a line-delimited dataset; alphabet sizes inferred as max+1 unless given."""
    items = []
    kinds = set()
    for line_no, line in enumerate(open(path, encoding="utf-8"), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{line_no}: invalid record: {exc}") from None
        kinds.add(rec["label_kind"])
        items.append(
            SequenceItem(
                item_id=int(rec["id"]),
                actions=np.asarray(rec["actions"], dtype=np.int64),
                observations=np.asarray(rec["observations"], dtype=np.int64),
                label=rec["label"],
            )
        )
    if not items:
        raise ValueError(f"{path}: empty dataset")
    if len(kinds) != 1:
        raise ValueError(f"{path}: mixed label kinds {sorted(kinds)}")
    kind = kinds.pop()
    if n_actions is None:
        n_actions = 1 + max(int(item.actions.max()) for item in items)
    if n_observations is None:
        n_observations = 1 + max(int(item.observations.max()) for item in items)
    if kind == "class" and n_classes is None:
        n_classes = 1 + max(int(item.label) for item in items)
    return SequenceDataset(
        items=items, label_kind=kind, n_actions=n_actions,
        n_observations=n_observations, n_classes=n_classes,
    )


def split_dataset(ds: SequenceDataset, val_fraction: float, test_fraction: float, seed: int):
    """Deterministic (train, validation, test) split by seeded permutation."""
    if val_fraction < 0 or test_fraction < 0 or val_fraction + test_fraction >= 1:
        raise ValueError("fractions must be nonnegative and sum below 1")
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * val_fraction))
    n_test = int(round(n * test_fraction))
    parts = {
        "validation": perm[:n_val],
        "test": perm[n_val:n_val + n_test],
        "train": perm[n_val + n_test:],
    }
    out = []
    for split in ("train", "validation", "test"):
        out.append(replace(ds, items=[ds.items[i] for i in parts[split]], split=split))
    return tuple(out)


def iter_batches(ds: SequenceDataset, batch_size: int, rng: np.random.Generator | None = None):
    """Yield (inputs (B, T, F), labels (B,)) batches of equal-length items.

    Items are bucketed by length so no padding is ever needed (the pooled
    mean must run over true steps only).  With an rng, both the item order
    inside buckets and the order of the emitted batches are shuffled.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    by_length = {}
    for idx, item in enumerate(ds.items):
        by_length.setdefault(item.length, []).append(idx)
    batches = []
    for length in sorted(by_length):
        idxs = by_length[length]
        if rng is not None:
            idxs = [idxs[i] for i in rng.permutation(len(idxs))]
        for start in range(0, len(idxs), batch_size):
            batches.append(idxs[start:start + batch_size])
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    dtype = np.int64 if ds.label_kind == "class" else np.float64
    for batch in batches:
        x = np.stack([encode_item(ds.items[i], ds) for i in batch])
        y = np.array([ds.items[i].label for i in batch], dtype=dtype)
        yield x, y


LABEL_EXTRACTORS = ("hypothesis", "ml_index", "gamma", "ll_gap", "confidence")


def dataset_from_batch(
    batch: EpisodeBatch,
    horizons: np.ndarray,
    label: str,
    model: ObservationModel,
    prior: np.ndarray | None = None,
    id_offset: int = 0,
    belief_model: ObservationModel | None = None,
) -> SequenceDataset:
    """Truncate simulated episodes to per-episode horizons and label them.

    Valid because every agent here is horizon-free: its action at step t
    depends only on the prefix, so the first h steps of a horizon-T episode
    are distributed exactly as a horizon-h episode on the same rng stream.

    Labels are read from the stored per-step traces at each episode's final
    column: ``hypothesis`` (true index), ``ml_index`` (running maximum-
    likelihood estimate), ``gamma`` (posterior error), ``ll_gap`` (best minus
    second-best log-likelihood), or ``confidence`` (recomputed by belief
    replay, since the full posterior is not stored per step).

    ``belief_model`` relabels the sequences under a different observation
    model (belief replay).  This is how held-out sequences from a shifted
    environment get labels consistent with a decoder's training-time label
    function: the statistic a decoder emulates is defined by the model it was
    trained against, not by whichever environment generated the inputs.
    """
    if label not in LABEL_EXTRACTORS:
        raise ValueError(f"label must be one of {LABEL_EXTRACTORS}, got {label!r}")
    horizons = np.asarray(horizons, dtype=np.int64)
    n = batch.n_episodes
    if horizons.shape != (n,):
        raise ValueError(f"need one horizon per episode, got shape {horizons.shape}")
    if np.any(horizons < 1) or np.any(horizons > batch.horizon):
        raise ValueError("horizons must lie in [1, simulated horizon]")

    rows = np.arange(n)
    if belief_model is not None and label != "hypothesis":
        values = replay_labels(batch, horizons, label, belief_model, prior)
    elif label == "hypothesis":
        values = batch.hypotheses
    elif label == "ml_index":
        values = batch.ml_idx[rows, horizons]
    elif label == "gamma":
        values = batch.gamma[rows, horizons]
    elif label == "ll_gap":
        values = batch.ll[rows, horizons]
    else:
        values = _confidence_at(batch, horizons, model, prior)

    items = []
    for i in range(n):
        h = int(horizons[i])
        items.append(
            SequenceItem(
                item_id=id_offset + i,
                actions=np.asarray(batch.actions[i, :h], dtype=np.int64),
                observations=np.asarray(batch.observations[i, :h], dtype=np.int64),
                label=int(values[i]) if label in ("hypothesis", "ml_index") else float(values[i]),
            )
        )
    kind = "class" if label in ("hypothesis", "ml_index") else "scalar"
    return SequenceDataset(
        items=items,
        label_kind=kind,
        n_actions=model.n_actions,
        n_observations=model.n_observations,
        n_classes=model.n_hypotheses if kind == "class" else None,
    )


def _confidence_at(batch: EpisodeBatch, horizons: np.ndarray, model: ObservationModel,
                   prior: np.ndarray | None) -> np.ndarray:
    return replay_labels(batch, horizons, "confidence", model, prior)


def replay_labels(batch: EpisodeBatch, horizons: np.ndarray, label: str,
                  model: ObservationModel, prior: np.ndarray | None) -> np.ndarray:
    """Per-episode statistic at each horizon under a replayed belief model."""
    if prior is None:
        prior = np.full(model.n_hypotheses, 1.0 / model.n_hypotheses)
    horizons = np.asarray(horizons, dtype=np.int64)
    tracker = BatchBeliefTracker(model, prior, batch.n_episodes)
    out = np.empty(batch.n_episodes)
    for t in range(int(horizons.max())):
        tracker.update(batch.actions[:, t], batch.observations[:, t])
        done = horizons == t + 1
        if not np.any(done):
            continue
        if label == "gamma":
            out[done] = tracker.gamma()[done]
        elif label == "ml_index":
            out[done] = tracker.ml_index()[done]
        elif label == "ll_gap":
            out[done] = tracker.ll_gap()[done]
        elif label == "confidence":
            for i in np.flatnonzero(done):
                out[i] = confidence_from_rho(tracker.rho[i])
        else:
            raise ValueError(f"cannot replay label {label!r}")
    return out


def filter_dataset(ds: SequenceDataset, keep) -> SequenceDataset:
    """Dataset with only the items where ``keep(item)`` is true."""
    return replace(ds, items=[item for item in ds.items if keep(item)])
