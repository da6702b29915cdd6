"""Recurrent actor-critic trained with clipped-surrogate policy optimization.

The policy is belief-free: its step input is one-hot(previous action) +
one-hot(previous observation) — all zeros at the first step — and nothing
else.  The first action of every episode is uniform (it is not a policy
decision) and is excluded from the surrogate and entropy terms; the reward
for step t is the error-probability improvement gamma_{t-1} - gamma_t
computed by the simulation engine's hidden belief tracker, so total episode
reward telescopes to gamma_0 - gamma_T exactly.

Updates follow the standard recipe: generalized advantage estimation,
advantages normalized per collected batch, several epochs of whole-episode
mini-batches (log-probabilities recomputed by re-running the recurrent
forward from episode start), one Adam step per mini-batch with global
gradient-norm clipping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import EpisodeBatch, StepContext, categorical_rows, simulate
from .env import EnvironmentPair, ObservationModel
from .nn import adam_init, adam_step, clip_grad_norm, init_cell, softmax
from .nn.cells import CellParams, gru_step, lstm_step
from .nn.encoder import _backprop_direction, _run_direction


class NonFiniteLossError(RuntimeError):
    """The PPO objective became NaN or infinite; the update was aborted."""


@dataclass(frozen=True)
class PpoConfig:
    horizon: int = 10
    total_episodes: int = 30000
    batch_episodes: int = 512
    clip: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 3e-4
    epochs: int = 10
    minibatch_episodes: int = 16
    grad_clip: float = 0.5
    cell: str = "gru"
    hidden_size: int = 32
    n_layers: int = 1
    eval_every: int = 8192
    eval_episodes: int = 2000

    def __post_init__(self):
        if not 0.0 < self.clip:
            raise ValueError("clip must be positive")
        if not 0.0 < self.discount <= 1.0 or not 0.0 < self.gae_lambda <= 1.0:
            raise ValueError("discount and gae_lambda must lie in (0, 1]")
        if min(self.horizon, self.total_episodes, self.batch_episodes,
               self.epochs, self.minibatch_episodes, self.hidden_size, self.n_layers) < 1:
            raise ValueError("counts and sizes must be positive")


@dataclass
class PolicyModel:
    """Unidirectional recurrent core with per-step actor and critic heads."""

    cell: str
    n_actions: int
    n_observations: int
    hidden_size: int
    n_layers: int
    params: dict

    @property
    def input_size(self) -> int:
        return self.n_actions + self.n_observations

    def layer_input_size(self, layer: int) -> int:
        return self.input_size if layer == 0 else self.hidden_size

    def cell_view(self, layer: int) -> CellParams:
        prefix = f"l{layer}.f."
        names = [k.removeprefix(prefix) for k in self.params if k.startswith(prefix)]
        return CellParams(
            kind=self.cell,
            input_size=self.layer_input_size(layer),
            hidden_size=self.hidden_size,
            w={name: self.params[prefix + name] for name in names},
        )


def init_policy(n_actions: int, n_observations: int, config: PpoConfig,
                rng: np.random.Generator) -> PolicyModel:
    params = {}
    input_size = n_actions + n_observations
    for layer in range(config.n_layers):
        size_in = input_size if layer == 0 else config.hidden_size
        cell = init_cell(config.cell, size_in, config.hidden_size, rng)
        for name, arr in cell.w.items():
            params[f"l{layer}.f.{name}"] = arr
    bound = 1.0 / np.sqrt(config.hidden_size)
    params["actor.w"] = rng.uniform(-bound, bound, size=(n_actions, config.hidden_size))
    params["actor.b"] = np.zeros(n_actions)
    params["critic.w"] = rng.uniform(-bound, bound, size=(1, config.hidden_size))
    params["critic.b"] = np.zeros(1)
    return PolicyModel(cell=config.cell, n_actions=n_actions, n_observations=n_observations,
                       hidden_size=config.hidden_size, n_layers=config.n_layers, params=params)


def build_policy_inputs(actions: np.ndarray, observations: np.ndarray,
                        n_actions: int, n_observations: int) -> np.ndarray:
    """Step inputs (B, T, |A|+|Y|): previous step's pair, zeros at t=1.

    Deliberately consumes nothing but realized actions and observations —
    the policy has no access path to the hypothesis or the belief.
    """
    a = np.asarray(actions, dtype=np.int64)
    y = np.asarray(observations, dtype=np.int64)
    if a.shape != y.shape or a.ndim != 2:
        raise ValueError(f"need matching (B, T) actions/observations, got {a.shape}, {y.shape}")
    B, T = a.shape
    x = np.zeros((B, T, n_actions + n_observations))
    rows = np.arange(B)[:, None]
    steps = np.arange(T - 1)[None, :]
    x[rows, steps + 1, a[:, :-1]] = 1.0
    x[rows, steps + 1, n_actions + y[:, :-1]] = 1.0
    return x


@dataclass
class PolicyTape:
    layer_inputs: list
    caches: list
    tops: np.ndarray
    consumed: bool = False


def forward_policy(policy: PolicyModel, inputs: np.ndarray, record: bool = False):
    """Per-step action logits (B, T, |A|) and values (B, T) for full episodes."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != policy.input_size:
        raise ValueError(f"inputs must be (B, T, {policy.input_size}), got {x.shape}")
    layer_in = x
    layer_inputs, all_caches = [], []
    for layer in range(policy.n_layers):
        if record:
            layer_inputs.append(layer_in)
        outs, caches = _run_direction(policy.cell_view(layer), layer_in, record)
        if record:
            all_caches.append(caches)
        layer_in = outs
    tops = layer_in
    logits = tops @ policy.params["actor.w"].T + policy.params["actor.b"]
    values = (tops @ policy.params["critic.w"].T)[:, :, 0] + policy.params["critic.b"][0]
    tape = PolicyTape(layer_inputs=layer_inputs, caches=all_caches, tops=tops) if record else None
    return logits, values, tape


def backward_policy(policy: PolicyModel, tape: PolicyTape, d_logits: np.ndarray,
                    d_values: np.ndarray) -> dict:
    """Exact gradients given per-step loss gradients on logits and values."""
    if tape is None or tape.consumed:
        raise ValueError("backward needs an unconsumed tape from forward_policy(record=True)")
    tape.consumed = True
    grads = zero_grads_policy(policy)
    tops = tape.tops
    grads["actor.w"] += np.einsum("bta,bth->ah", d_logits, tops)
    grads["actor.b"] += d_logits.sum(axis=(0, 1))
    grads["critic.w"][0] += np.einsum("bt,bth->h", d_values, tops)
    grads["critic.b"][0] += d_values.sum()
    d_out = d_logits @ policy.params["actor.w"] + d_values[:, :, None] * policy.params["critic.w"][0]
    for layer in range(policy.n_layers - 1, -1, -1):
        d_out = _backprop_direction(
            policy.cell_view(layer), tape.caches[layer], d_out, grads, f"l{layer}.f."
        )
    return grads


def zero_grads_policy(policy: PolicyModel) -> dict:
    return {name: np.zeros_like(arr) for name, arr in policy.params.items()}


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))


class PolicyAgent:
    """Engine adapter: steps the recurrent core and samples the actor.

    The first action is uniform from the episode's pre-drawn uniform; later
    actions are inverse-CDF draws from the actor distribution, so a rollout
    is a deterministic function of (parameters, master seed, episode index).
    Per-step action probabilities and value estimates are recorded for the
    rollout batch.
    """

    def __init__(self, policy: PolicyModel):
        self.policy = policy
        self.h = None
        self.c = None
        self.log_probs = []
        self.values = []

    def __call__(self, ctx: StepContext) -> np.ndarray:
        policy = self.policy
        B = ctx.u_action.shape[0]
        if ctx.t == 0:
            self.h = [np.zeros((B, policy.hidden_size)) for _ in range(policy.n_layers)]
            self.c = [np.zeros((B, policy.hidden_size)) for _ in range(policy.n_layers)]
            self.log_probs, self.values = [], []
            x = np.zeros((B, policy.input_size))
        else:
            x = np.zeros((B, policy.input_size))
            rows = np.arange(B)
            x[rows, ctx.prev_actions] = 1.0
            x[rows, policy.n_actions + ctx.prev_observations] = 1.0
        for layer in range(policy.n_layers):
            cell = policy.cell_view(layer)
            if policy.cell == "gru":
                self.h[layer], _ = gru_step(cell, x, self.h[layer])
            else:
                self.h[layer], self.c[layer], _ = lstm_step(cell, x, self.h[layer], self.c[layer])
            x = self.h[layer]
        logits = x @ policy.params["actor.w"].T + policy.params["actor.b"]
        self.values.append((x @ policy.params["critic.w"].T)[:, 0] + policy.params["critic.b"][0])
        if ctx.t == 0:
            actions = np.minimum((ctx.u_action * policy.n_actions).astype(np.int64),
                                 policy.n_actions - 1)
            self.log_probs.append(np.full(B, -np.log(policy.n_actions)))
        else:
            probs = softmax(logits)
            actions = categorical_rows(probs, ctx.u_action)
            logp = log_softmax(logits)
            self.log_probs.append(logp[np.arange(B), actions])
        return actions


@dataclass
class RolloutBatch:
    """Episodes collected on the training environment for one update round.

    ``hypotheses`` and ``episode_batch`` are diagnostics only; the policy
    never reads them.
    """

    inputs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    hypotheses: np.ndarray
    episode_batch: EpisodeBatch

    @property
    def n_episodes(self) -> int:
        return self.actions.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    @property
    def total_rewards(self) -> np.ndarray:
        return self.rewards.sum(axis=1)

    @property
    def map_error(self) -> float:
        final = self.episode_batch.map_idx[:, -1]
        return float(np.mean(final != self.hypotheses))


def rollout(policy: PolicyModel, model: ObservationModel, prior: np.ndarray,
            n_episodes: int, horizon: int, master_seed: int,
            episode_offset: int = 0) -> RolloutBatch:
    """Collect whole episodes; rewards are per-step belief-error improvements."""
    agent = PolicyAgent(policy)
    batch = simulate(model, prior, agent, n_episodes, horizon, master_seed, episode_offset)
    rewards = batch.gamma[:, :-1] - batch.gamma[:, 1:]
    return RolloutBatch(
        inputs=build_policy_inputs(batch.actions, batch.observations,
                                   policy.n_actions, policy.n_observations),
        actions=np.asarray(batch.actions, dtype=np.int64),
        log_probs=np.stack(agent.log_probs, axis=1),
        rewards=rewards,
        values=np.stack(agent.values, axis=1),
        hypotheses=batch.hypotheses,
        episode_batch=batch,
    )


def gae(rewards, values, bootstrap_value=0.0, discount: float = 0.99,
        lam: float = 0.95):
    """Generalized advantage estimation; accepts (T,) or batched (B, T)."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape:
        raise ValueError(f"rewards {r.shape} and values {v.shape} must match")
    squeeze = r.ndim == 1
    if squeeze:
        r, v = r[None, :], v[None, :]
    B, T = r.shape
    boot = np.broadcast_to(np.asarray(bootstrap_value, dtype=np.float64), (B,))
    adv = np.empty((B, T))
    carry = np.zeros(B)
    next_value = boot
    for t in range(T - 1, -1, -1):
        delta = r[:, t] + discount * next_value - v[:, t]
        carry = delta + discount * lam * carry
        adv[:, t] = carry
        next_value = v[:, t]
    returns = adv + v
    if squeeze:
        return adv[0], returns[0]
    return adv, returns


def clipped_surrogate(ratios: np.ndarray, advantages: np.ndarray, clip: float):
    """Per-entry min(ratio*A, clip(ratio)*A) and the unclipped-branch mask."""
    unclipped = ratios * advantages
    clipped = np.clip(ratios, 1.0 - clip, 1.0 + clip) * advantages
    surrogate = np.minimum(unclipped, clipped)
    active = unclipped <= clipped
    return surrogate, active


def _minibatch_loss_and_grads(policy: PolicyModel, mb_inputs, mb_actions, mb_logp_old,
                              mb_adv, mb_returns, config: PpoConfig):
    """One mini-batch's PPO loss and exact parameter gradients."""
    B, T = mb_actions.shape
    logits, values, tape = forward_policy(policy, mb_inputs, record=True)
    logp_full = log_softmax(logits)
    probs = np.exp(logp_full)
    rows = np.arange(B)[:, None]
    cols = np.arange(T)[None, :]
    logp_new = logp_full[rows, cols, mb_actions]

    # step 1 is not a policy decision: excluded from surrogate and entropy
    mask = np.zeros((B, T))
    mask[:, 1:] = 1.0
    n_pg = max(mask.sum(), 1.0)

    ratio = np.exp(logp_new - mb_logp_old)
    surrogate, active = clipped_surrogate(ratio, mb_adv, config.clip)
    pg_loss = -np.sum(surrogate * mask) / n_pg

    entropy = -np.sum(probs * logp_full, axis=2)
    entropy_mean = np.sum(entropy * mask) / n_pg

    v_err = values - mb_returns
    value_loss = np.mean(v_err * v_err)

    total = pg_loss + config.value_coef * value_loss - config.entropy_coef * entropy_mean
    if not np.isfinite(total):
        raise NonFiniteLossError(
            f"non-finite PPO loss: pg {pg_loss}, value {value_loss}, entropy {entropy_mean}"
        )

    # d loss / d logits, assembled per term
    coef = -(mask * active * ratio * mb_adv) / n_pg  # surrogate, via d logp
    one_hot = np.zeros_like(logits)
    one_hot[rows, cols, mb_actions] = 1.0
    d_logits = coef[:, :, None] * (one_hot - probs)
    # entropy: dH/dlogits = -p * (logp + H); loss has -entropy_coef * mean(H)
    d_entropy = -probs * (logp_full + entropy[:, :, None])
    d_logits += (-config.entropy_coef / n_pg) * mask[:, :, None] * d_entropy
    d_values = config.value_coef * 2.0 * v_err / v_err.size

    grads = backward_policy(policy, tape, d_logits, d_values)
    stats = {
        "loss": float(total),
        "pg_loss": float(pg_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy_mean),
        "clip_fraction": float(np.sum((~active) * mask) / n_pg),
    }
    return grads, stats


def ppo_update(policy: PolicyModel, batch: RolloutBatch, config: PpoConfig,
               adam_state, rng: np.random.Generator) -> dict:
    """Several epochs of whole-episode mini-batch updates on one batch."""
    if batch.n_episodes == 0:
        raise ValueError("empty rollout batch")
    adv, returns = gae(batch.rewards, batch.values, 0.0, config.discount, config.gae_lambda)
    # normalize over the entries the surrogate actually uses (steps after the
    # uniform first action); horizon-1 batches have none and skip normalization
    included = adv[:, 1:]
    if included.size:
        std = max(float(included.std()), 1e-8)
        adv_norm = (adv - float(included.mean())) / std
    else:
        adv_norm = adv

    stats_acc = []
    n = batch.n_episodes
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_episodes):
            idx = order[start:start + config.minibatch_episodes]
            grads, stats = _minibatch_loss_and_grads(
                policy, batch.inputs[idx], batch.actions[idx], batch.log_probs[idx],
                adv_norm[idx], returns[idx], config,
            )
            stats["grad_norm"] = clip_grad_norm(grads, config.grad_clip)
            adam_step(policy.params, grads, adam_state)
            stats_acc.append(stats)
    keys = stats_acc[0].keys()
    return {k: float(np.mean([s[k] for s in stats_acc])) for k in keys}


def train_policy(env_pair: EnvironmentPair, config: PpoConfig, seed: int):
    """Phase-1 training loop: alternate rollouts and PPO updates.

    Returns (policy, learning_curve, final_stats); the curve rows are
    ``{episodes_trained, train_env_error, mean_episode_reward}`` where the
    error is MAP decoding on held-out training-environment rollouts.
    """
    model = env_pair.train
    rng = np.random.default_rng(seed)
    policy = init_policy(model.n_actions, model.n_observations, config, rng)
    adam_state = adam_init(policy.params, lr=config.lr)

    def eval_point(episodes_trained: int, eval_round: int) -> dict:
        ev = rollout(policy, model, env_pair.prior, config.eval_episodes, config.horizon,
                     master_seed=seed + 1, episode_offset=eval_round * config.eval_episodes)
        return {
            "episodes_trained": episodes_trained,
            "train_env_error": ev.map_error,
            "mean_episode_reward": float(ev.total_rewards.mean()),
        }

    curve = [eval_point(0, 0)]
    trained = 0
    next_eval = config.eval_every
    eval_round = 1
    stats = {}
    while trained < config.total_episodes:
        n = min(config.batch_episodes, config.total_episodes - trained)
        batch = rollout(policy, model, env_pair.prior, n, config.horizon,
                        master_seed=seed, episode_offset=trained)
        stats = ppo_update(policy, batch, config, adam_state, rng)
        trained += n
        if trained >= next_eval or trained >= config.total_episodes:
            curve.append(eval_point(trained, eval_round))
            eval_round += 1
            next_eval += config.eval_every
    return policy, curve, stats


def save_learning_curve(curve: list, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("episodes_trained,train_env_error,mean_episode_reward\n")
        for row in curve:
            fh.write(f"{row['episodes_trained']},{row['train_env_error']:.6f},"
                     f"{row['mean_episode_reward']:.6f}\n")
