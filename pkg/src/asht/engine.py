"""Vectorized simulation of many sensing episodes at once.

Randomness layout
-----------------
Each episode owns a counter-based stream seeded by (master_seed,
episode_index) and consumes a fixed budget from it: one uniform for the
hypothesis draw, then exactly three per step (explore coin, action draw,
observation draw).  The whole batch is therefore a pure function of the seed
and the episode indices — independent of batch size, episode order, or how
episodes are split across workers.

Agents are callables receiving a :class:`StepContext`; the exact posterior
and log-likelihoods are tracked alongside every episode regardless of the
agent, since rewards and supervision labels are derived from them even when
the agent itself never looks at them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .chernoff import default_exploration_schedule, kl_matrix, maximin_action_distribution
from .env import ObservationModel


def episode_uniform_matrix(
    master_seed: int, episode_indices: np.ndarray, horizon: int
) -> np.ndarray:
    """Per-episode uniforms, one row per episode, 1 + 3*horizon per row."""
    n = len(episode_indices)
    out = np.empty((n, 1 + 3 * horizon))
    for row, idx in enumerate(episode_indices):
        rng = np.random.default_rng(np.random.SeedSequence((master_seed, int(idx))))
        out[row] = rng.random(1 + 3 * horizon)
    return out


def categorical_rows(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row: probs (n, k) against uniforms u (n,)."""
    cdf = np.cumsum(probs, axis=1)
    idx = np.sum(u[:, None] >= cdf, axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


class BatchBeliefTracker:
    """Posterior and cumulative log-likelihood for n episodes in lockstep.

    The per-episode semantics match the scalar functions in
    :mod:`asht.belief` exactly; this class only batches them.
    """

    def __init__(self, model: ObservationModel, prior: np.ndarray, n: int):
        self.model = model
        prior = np.asarray(prior, dtype=np.float64)
        self.rho = np.tile(prior, (n, 1))
        self.loglik = np.zeros((n, model.n_hypotheses))
        self.t = 0

    def update(self, actions: np.ndarray, observations: np.ndarray) -> None:
        lik = self.model.table[actions, :, observations]  # (n, N)
        self.rho *= lik
        norm = self.rho.sum(axis=1, keepdims=True)
        if np.any(norm <= 0.0):
            raise ValueError("an episode reached an observation impossible under every hypothesis")
        self.rho /= norm
        with np.errstate(divide="ignore"):
            self.loglik += np.log(lik)
        self.t += 1

    def gamma(self) -> np.ndarray:
        """Error probability 1 - max rho per episode."""
        return 1.0 - self.rho.max(axis=1)

    def ml_index(self) -> np.ndarray:
        """Argmax of cumulative log-likelihood (ties break low)."""
        return np.argmax(self.loglik, axis=1)

    def ll_gap(self) -> np.ndarray:
        """Best minus second-best cumulative log-likelihood per episode."""
        top2 = np.partition(self.loglik, -2, axis=1)[:, -2:]
        return top2[:, 1] - top2[:, 0]

    def map_index(self) -> np.ndarray:
        return np.argmax(self.rho, axis=1)


@dataclass
class StepContext:
    """Everything an agent may read when choosing the batch's next actions.

    ``u_action`` is the only randomness an agent should consume; belief-free
    agents must ignore ``rho``/``loglik``/``ml_idx``.
    """

    t: int
    rho: np.ndarray
    loglik: np.ndarray
    ml_idx: np.ndarray
    prev_actions: np.ndarray | None
    prev_observations: np.ndarray | None
    u_explore: np.ndarray
    u_action: np.ndarray
    n_actions: int


Agent = Callable[[StepContext], np.ndarray]


@dataclass
class EpisodeBatch:
    """Trajectories plus the exact-belief traces derived from them.

    Index convention: ``gamma[:, t]``, ``ll[:, t]``, ``ml_idx[:, t]`` and
    ``map_idx[:, t]`` describe the state after t observations, so column 0 is
    the prior state and column T the final one.  ``actions[:, t]`` is the
    (t+1)-th action taken.
    """

    hypotheses: np.ndarray
    actions: np.ndarray
    observations: np.ndarray
    gamma: np.ndarray
    ll: np.ndarray
    ml_idx: np.ndarray
    map_idx: np.ndarray

    @property
    def n_episodes(self) -> int:
        return self.hypotheses.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]


def simulate(
    model: ObservationModel,
    prior: np.ndarray,
    agent: Agent,
    n_episodes: int,
    horizon: int,
    master_seed: int,
    episode_offset: int = 0,
    knowledge_model: ObservationModel | None = None,
) -> EpisodeBatch:
    """Run ``n_episodes`` episodes of ``horizon`` steps under ``agent``.

    Episode i uses the stream (master_seed, episode_offset + i), so splitting
    a range of episodes across calls or workers reproduces the single-call
    result exactly.

    Observations always come from ``model``; ``knowledge_model`` (default:
    ``model`` itself) is what the belief tracker — and hence both the agent's
    context and the recorded gamma/ll/MAP traces — assumes the environment to
    be.  Passing the training model while simulating the testing model
    evaluates a baseline that only knows the training probabilities.
    """
    prior = np.asarray(prior, dtype=np.float64)
    indices = np.arange(episode_offset, episode_offset + n_episodes)
    uniforms = episode_uniform_matrix(master_seed, indices, horizon)
    hypotheses = categorical_rows(np.tile(prior, (n_episodes, 1)), uniforms[:, 0])

    tracker = BatchBeliefTracker(knowledge_model or model, prior, n_episodes)
    actions = np.zeros((n_episodes, horizon), dtype=np.int16)
    observations = np.zeros((n_episodes, horizon), dtype=np.int16)
    gamma = np.zeros((n_episodes, horizon + 1))
    ll = np.zeros((n_episodes, horizon + 1))
    ml_idx = np.zeros((n_episodes, horizon + 1), dtype=np.int16)
    map_idx = np.zeros((n_episodes, horizon + 1), dtype=np.int16)
    gamma[:, 0] = tracker.gamma()
    ll[:, 0] = tracker.ll_gap()
    ml_idx[:, 0] = tracker.ml_index()
    map_idx[:, 0] = tracker.map_index()

    rows = np.arange(n_episodes)
    for t in range(horizon):
        ctx = StepContext(
            t=t,
            rho=tracker.rho,
            loglik=tracker.loglik,
            ml_idx=ml_idx[:, t],
            prev_actions=actions[:, t - 1] if t > 0 else None,
            prev_observations=observations[:, t - 1] if t > 0 else None,
            u_explore=uniforms[:, 1 + 3 * t],
            u_action=uniforms[:, 2 + 3 * t],
            n_actions=model.n_actions,
        )
        a = np.asarray(agent(ctx), dtype=np.int64)
        obs_probs = model.table[a, hypotheses, :]  # (n, Y)
        y = categorical_rows(obs_probs, uniforms[:, 3 + 3 * t])
        tracker.update(a, y)
        actions[:, t] = a
        observations[:, t] = y
        gamma[:, t + 1] = tracker.gamma()
        ll[:, t + 1] = tracker.ll_gap()
        ml_idx[:, t + 1] = tracker.ml_index()
        map_idx[:, t + 1] = tracker.map_index()

    return EpisodeBatch(
        hypotheses=hypotheses,
        actions=actions,
        observations=observations,
        gamma=gamma,
        ll=ll,
        ml_idx=ml_idx,
        map_idx=map_idx,
    )


class RandomAgent:
    """Uniform action at every step; the no-learning control."""

    def __call__(self, ctx: StepContext) -> np.ndarray:
        return (ctx.u_action * ctx.n_actions).astype(np.int64)


class ChernoffAgent:
    """Vectorized modified maximin test against a known observation model.

    Maximin distributions for every candidate leader are precomputed once;
    at each step episodes either explore uniformly (probability schedule(t),
    t 1-based) or sample from the distribution of their current leader.
    """

    def __init__(
        self,
        model: ObservationModel,
        prior: np.ndarray,
        schedule: Callable[[int], float] = default_exploration_schedule,
    ):
        self.schedule = schedule
        self.prior_leader = int(np.argmax(np.asarray(prior, dtype=np.float64)))
        g = np.empty((model.n_hypotheses, model.n_actions))
        for i_hat in range(model.n_hypotheses):
            g[i_hat] = maximin_action_distribution(kl_matrix(model, i_hat)).g
        self.g = g

    def __call__(self, ctx: StepContext) -> np.ndarray:
        if ctx.t == 0:
            leaders = np.full(len(ctx.u_action), self.prior_leader)
        else:
            leaders = ctx.ml_idx
        exploit = categorical_rows(self.g[leaders], ctx.u_action)
        explore = (ctx.u_action * ctx.n_actions).astype(np.int64)
        take_explore = ctx.u_explore < self.schedule(ctx.t + 1)
        return np.where(take_explore, explore, exploit)


def first_crossing_times(ll: np.ndarray, threshold: float) -> np.ndarray:
    """First column index where ll exceeds the threshold, else the last one.

    ``ll`` has one column per belief state (column 0 = prior, never a stop);
    episodes that never cross are forced to decide at the final column.
    """
    crossed = ll > threshold
    crossed[:, 0] = False
    t_stop = np.argmax(crossed, axis=1)
    never = ~crossed.any(axis=1)
    t_stop[never] = ll.shape[1] - 1
    return t_stop


def sequential_decisions(
    batch: EpisodeBatch, c: float
) -> tuple[np.ndarray, np.ndarray]:
    """Stop times and decisions for the log-likelihood stopping rule.

    Returns (stop_times, decisions): the episode stops at the first t with
    LL_t > -ln c (or at the horizon), and decides the leading hypothesis at
    that time.
    """
    if not 0.0 < c < 1.0:
        raise ValueError(f"tolerance c must lie in (0, 1), got {c}")
    t_stop = first_crossing_times(batch.ll, -np.log(c))
    rows = np.arange(batch.n_episodes)
    return t_stop, batch.ml_idx[rows, t_stop].astype(np.int64)
