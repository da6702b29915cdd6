"""Finite-alphabet observation models and stochastic episode generation.

An environment is a conditional probability table ``p[a][i][y]`` giving the
chance of observing symbol ``y`` when action ``a`` is performed while
hypothesis ``i`` is true.  Observations are i.i.d. given (hypothesis, action).
Training and testing variants of the same environment are bundled in an
:class:`EnvironmentPair` together with the prior over hypotheses.

Observations are passed around as indices into ``model.observations``; only
the encoding layer would change if a continuous observation space were added.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

PROB_TOL = 1e-12

# Hypothesis-space guard for product environments: 2^n grows fast.
MAX_PRODUCT_SENSORS = 20


class EnvConfigError(ValueError):
    """An environment description failed validation; the message names the field."""


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ObservationModel:
    """Immutable conditional table P[Y=y | X=i, action=a] over finite sets.

    ``table`` has shape (n_actions, n_hypotheses, n_observations) and every
    (action, hypothesis) row is a probability distribution over observation
    symbols.  Instances are safe to share between concurrent workers.
    """

    actions: tuple
    observations: tuple
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "observations", tuple(self.observations))
        table = _as_readonly(np.asarray(self.table, dtype=np.float64))
        object.__setattr__(self, "table", table)
        if table.ndim != 3:
            raise EnvConfigError(f"table: expected 3 dimensions, got {table.ndim}")
        n_act, n_hyp, n_obs = table.shape
        if len(self.actions) != n_act:
            raise EnvConfigError(
                f"actions: {len(self.actions)} labels but table has {n_act} rows"
            )
        if len(self.observations) != n_obs:
            raise EnvConfigError(
                f"observations: {len(self.observations)} symbols but table has {n_obs} columns"
            )
        if n_hyp < 2:
            raise EnvConfigError(f"hypotheses: need at least 2, got {n_hyp}")
        if n_act < 1:
            raise EnvConfigError("actions: need at least one action")
        if n_obs < 2:
            raise EnvConfigError(f"observations: need at least 2 symbols, got {n_obs}")
        if np.any(table < 0.0) or np.any(table > 1.0):
            a, i, y = np.argwhere((table < 0.0) | (table > 1.0))[0]
            raise EnvConfigError(
                f"table[{a}][{i}][{y}]: probability {table[a, i, y]} outside [0, 1]"
            )
        sums = table.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
        if bad.size:
            a, i = bad[0]
            raise EnvConfigError(f"table[{a}][{i}]: row sums to {sums[a, i]!r}, expected 1")

    @property
    def n_hypotheses(self) -> int:
        return self.table.shape[1]

    @property
    def n_actions(self) -> int:
        return self.table.shape[0]

    @property
    def n_observations(self) -> int:
        return self.table.shape[2]

    def likelihoods(self, action: int, observation: int) -> np.ndarray:
        """Vector p_i^a(y) over hypotheses i for a fixed (action, observation)."""
        return self.table[action, :, observation]


@dataclass(frozen=True)
class EnvironmentPair:
    """A training model and a (possibly perturbed) testing model plus the prior."""

    train: ObservationModel
    test: ObservationModel
    prior: np.ndarray

    def __post_init__(self):
        prior = _as_readonly(np.asarray(self.prior, dtype=np.float64))
        object.__setattr__(self, "prior", prior)
        if self.train.actions != self.test.actions:
            raise EnvConfigError("test.actions: must match train.actions")
        if self.train.observations != self.test.observations:
            raise EnvConfigError("test.observations: must match train.observations")
        if self.train.n_hypotheses != self.test.n_hypotheses:
            raise EnvConfigError("test.table: hypothesis count differs from train.table")
        if prior.ndim != 1 or prior.shape[0] != self.train.n_hypotheses:
            raise EnvConfigError(
                f"prior: length {prior.shape} does not match {self.train.n_hypotheses} hypotheses"
            )
        if np.any(prior < 0.0):
            raise EnvConfigError("prior: negative entry")
        if abs(prior.sum() - 1.0) > PROB_TOL:
            raise EnvConfigError(f"prior: sums to {prior.sum()!r}, expected 1")

    @property
    def n_hypotheses(self) -> int:
        return self.train.n_hypotheses


@dataclass(frozen=True)
class EpisodeRng:
    """Counter-based random stream identity for one episode (or episode batch).

    Distinct (master_seed, episode_index) pairs yield independent streams and
    the same pair always reproduces the same stream, so episodes can be
    executed in any order or in parallel without changing results.
    """

    master_seed: int
    episode_index: int

    def stream(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence((self.master_seed, self.episode_index))
        )


def episode_stream(master_seed: int, episode_index: int) -> np.random.Generator:
    """Shortcut for ``EpisodeRng(master_seed, episode_index).stream()``."""
    return EpisodeRng(master_seed, episode_index).stream()


def build_bernoulli_env(
    rows: Mapping[str, Sequence[float]] | Sequence[Sequence[float]],
) -> ObservationModel:
    """Binary-observation model from per-action probabilities of observing 1.

    ``rows`` maps each action to its vector of P[Y=1 | X=i] values (a mapping
    keyed by action label, or a plain sequence of rows which get labels
    "a0", "a1", ...).  The observation alphabet is {0, 1}.
    """
    if isinstance(rows, Mapping):
        labels = tuple(rows.keys())
        matrix = [rows[k] for k in labels]
    else:
        matrix = list(rows)
        labels = tuple(f"a{k}" for k in range(len(matrix)))
    if not matrix:
        raise EnvConfigError("rows: need at least one action row")
    width = len(matrix[0])
    for k, row in enumerate(matrix):
        if len(row) != width:
            raise EnvConfigError(
                f"rows[{k}]: length {len(row)} differs from first row length {width}"
            )
    p1 = np.asarray(matrix, dtype=np.float64)
    if np.any(p1 < 0.0) or np.any(p1 > 1.0):
        a, i = np.argwhere((p1 < 0.0) | (p1 > 1.0))[0]
        raise EnvConfigError(f"rows[{a}][{i}]: probability {p1[a, i]} outside [0, 1]")
    table = np.stack([1.0 - p1, p1], axis=2)
    return ObservationModel(actions=labels, observations=(0, 1), table=table)


def product_sensor_env(
    n_sensors: int,
    p_abnormal: Sequence[float],
    p_normal: Sequence[float],
) -> ObservationModel:
    """Factored anomaly-detection model: one binary sensor per process.

    Hypothesis ``i`` is read as an ``n_sensors``-bit mask of abnormal
    processes (bit a set = process a abnormal), so there are 2^n_sensors
    hypotheses; action ``a`` queries sensor ``a``, which outputs 1 with
    probability ``p_abnormal[a]`` if its process is abnormal and
    ``p_normal[a]`` otherwise.
    """
    if n_sensors < 1:
        raise EnvConfigError(f"n_sensors: need at least 1, got {n_sensors}")
    if n_sensors > MAX_PRODUCT_SENSORS:
        raise EnvConfigError(
            f"n_sensors: {n_sensors} exceeds limit {MAX_PRODUCT_SENSORS}"
            " (hypothesis space grows as 2^n)"
        )
    if len(p_abnormal) != n_sensors or len(p_normal) != n_sensors:
        raise EnvConfigError("p_abnormal/p_normal: need one probability per sensor")
    rows = {}
    masks = np.arange(2**n_sensors)
    for a in range(n_sensors):
        hot = np.asarray(p_abnormal[a], dtype=np.float64)
        cold = np.asarray(p_normal[a], dtype=np.float64)
        if not (0.0 <= hot <= 1.0) or not (0.0 <= cold <= 1.0):
            raise EnvConfigError(f"sensor {a}: probability outside [0, 1]")
        bit = (masks >> a) & 1
        rows[f"s{a}"] = np.where(bit == 1, hot, cold)
    return build_bernoulli_env(rows)


def sample_hypothesis(prior: np.ndarray, rng: np.random.Generator) -> int:
    """Draw the true hypothesis index from the prior."""
    prior = np.asarray(prior, dtype=np.float64)
    if prior.ndim != 1 or np.any(prior < 0) or abs(prior.sum() - 1.0) > PROB_TOL:
        raise EnvConfigError("prior: not a probability vector")
    return int(rng.choice(prior.shape[0], p=prior))


def sample_observation(
    model: ObservationModel, hypothesis: int, action: int, rng: np.random.Generator
) -> int:
    """Draw one observation index from p[action][hypothesis][.]."""
    if not 0 <= hypothesis < model.n_hypotheses:
        raise IndexError(f"hypothesis {hypothesis} out of range [0, {model.n_hypotheses})")
    if not 0 <= action < model.n_actions:
        raise IndexError(f"action {action} out of range [0, {model.n_actions})")
    return int(rng.choice(model.n_observations, p=model.table[action, hypothesis]))


# ---------------------------------------------------------------------------
# Config file round trip.  Format documented in docs/env_config_schema.md.
# ---------------------------------------------------------------------------


def _require(doc: dict, field: str, path: str):
    if field not in doc:
        raise EnvConfigError(f"{path}{field}: missing required field")
    return doc[field]


def _model_from_doc(doc: dict, actions, observations, n_hyp: int, path: str) -> ObservationModel:
    table = _require(doc, "table", path)
    if not isinstance(table, list) or len(table) != len(actions):
        raise EnvConfigError(f"{path}table: expected {len(actions)} action rows")
    for a, block in enumerate(table):
        if not isinstance(block, list) or len(block) != n_hyp:
            raise EnvConfigError(f"{path}table[{a}]: expected {n_hyp} hypothesis rows")
        for i, row in enumerate(block):
            if not isinstance(row, list) or len(row) != len(observations):
                raise EnvConfigError(
                    f"{path}table[{a}][{i}]: expected {len(observations)} probabilities"
                )
            total = float(sum(row))
            if abs(total - 1.0) > PROB_TOL:
                raise EnvConfigError(f"{path}table[{a}][{i}]: row sums to {total!r}, expected 1")
    try:
        return ObservationModel(
            actions=tuple(actions), observations=tuple(observations), table=np.asarray(table)
        )
    except EnvConfigError as exc:
        raise EnvConfigError(f"{path}{exc}") from None


def load_env_config(path: str | Path) -> EnvironmentPair:
    """Load and validate an environment-pair config file (JSON).

    Raises :class:`EnvConfigError` naming the offending field on any schema
    or probability violation.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"environment config not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise EnvConfigError(f"{path.name}: not valid JSON ({exc})") from None
    n_hyp = _require(doc, "hypotheses", "")
    if not isinstance(n_hyp, int) or n_hyp < 2:
        raise EnvConfigError(f"hypotheses: expected integer >= 2, got {n_hyp!r}")
    actions = _require(doc, "actions", "")
    observations = _require(doc, "observations", "")
    prior = _require(doc, "prior", "")
    if not isinstance(actions, list) or not actions:
        raise EnvConfigError("actions: expected a non-empty list")
    if not isinstance(observations, list) or len(observations) < 2:
        raise EnvConfigError("observations: expected a list of at least 2 symbols")
    if not isinstance(prior, list) or len(prior) != n_hyp:
        raise EnvConfigError(f"prior: expected {n_hyp} probabilities")
    train = _model_from_doc(_require(doc, "train", ""), actions, observations, n_hyp, "train.")
    test = _model_from_doc(_require(doc, "test", ""), actions, observations, n_hyp, "test.")
    try:
        return EnvironmentPair(train=train, test=test, prior=np.asarray(prior))
    except EnvConfigError as exc:
        raise EnvConfigError(str(exc)) from None


def save_env_config(pair: EnvironmentPair, path: str | Path) -> None:
    """Write an environment pair as JSON; load_env_config round-trips bit-for-bit."""
    doc = {
        "hypotheses": pair.n_hypotheses,
        "actions": list(pair.train.actions),
        "observations": list(pair.train.observations),
        "prior": pair.prior.tolist(),
        "train": {"table": pair.train.table.tolist()},
        "test": {"table": pair.test.table.tolist()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def two_sensor_pair() -> EnvironmentPair:
    """The built-in two-sensor anomaly environment (uniform prior).

    Training: sensors A and B each report 1 with probability 0.8 when their
    process is anomalous and 0.2 otherwise.  Testing perturbs A to 0.75/0.25
    and B to 0.85/0.15.
    """
    train = build_bernoulli_env({"A": [0.2, 0.8, 0.2, 0.8], "B": [0.2, 0.2, 0.8, 0.8]})
    test = build_bernoulli_env({"A": [0.25, 0.75, 0.25, 0.75], "B": [0.15, 0.15, 0.85, 0.85]})
    return EnvironmentPair(train=train, test=test, prior=np.full(4, 0.25))


def four_sensor_pair() -> EnvironmentPair:
    """The built-in four-sensor product environment (16 hypotheses).

    Training sensors fire with probability 0.8 on abnormal processes and 0.2
    on normal ones; in testing the first two sensors fire with probability
    0.85 and the last two with 0.75 on abnormal processes.  The prior is
    uniform (the two-sensor case uses a uniform prior; the same choice is
    applied here).
    """
    train = product_sensor_env(4, [0.8] * 4, [0.2] * 4)
    test = product_sensor_env(4, [0.85, 0.85, 0.75, 0.75], [0.2] * 4)
    return EnvironmentPair(train=train, test=test, prior=np.full(16, 1.0 / 16.0))
