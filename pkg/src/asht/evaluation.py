"""Monte-Carlo evaluation: fixed-horizon error, sequential stop time/error.

Agents
------
``chernoff``
    The exact-belief maximin baseline.  It *knows* an observation model —
    by default the one of the environment it runs in (for testing-environment
    runs that is a deliberate advantage: the baseline is told the perturbed
    probabilities, the learned agents never are).  ``knowledge="train"``
    evaluates it with only the training model instead.
``random``
    Uniform actions with exact-MAP decoding under the knowledge model;
    the no-learning control.
``composite``
    The learned triple (policy + monitor + decoder); requires an
    :class:`~asht.pipeline.AgentBundle`.

Sequential stopping: the composite agent stops when the monitor estimate
drops below c; the Chernoff baseline stops when the posterior error does
(``stop_rule="belief"``), or optionally when the log-likelihood gap exceeds
−ln c (``stop_rule="ll"``, the classical form).  Everything is capped at
``t_cap``.

Determinism: episodes are processed in fixed-size blocks of
:data:`BLOCK_EPISODES` regardless of worker count, and per-block results are
integer counters, so ``workers=N`` reproduces ``workers=1`` bit for bit.
Wall-clock seconds are recorded on summaries but written to CSV as 0.0
unless explicitly requested, keeping reports byte-stable across reruns.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .decoders import DecoderArch, TrainingConfig, classify_batch, train_inference
from .engine import ChernoffAgent, RandomAgent, first_crossing_times, simulate
from .env import EnvironmentPair, ObservationModel
from .pipeline import AgentBundle, composite_stop_times, gen_fixed_dataset, run_composite_batch
from .policy import PolicyAgent, PolicyModel

AGENT_KINDS = ("chernoff", "random", "composite")
ENV_KINDS = ("train", "test")
MODE_KINDS = ("fixed", "sequential")
STOP_RULES = ("belief", "ll")
BLOCK_EPISODES = 1000

RESULT_COLUMNS = ("agent", "env", "mode", "T_or_c", "episodes", "error",
                  "error_ci95", "mean_stop_time", "seed", "seconds")


@dataclass(frozen=True)
class EvalSpec:
    agent: str
    env: str = "test"
    mode: str = "fixed"
    value: float = 10.0  # horizon T (fixed) or threshold c (sequential)
    episodes: int = 10000
    seed: int = 0
    t_cap: int = 50
    knowledge: str = "test"
    stop_rule: str = "belief"

    def __post_init__(self):
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"agent must be one of {AGENT_KINDS}, got {self.agent!r}")
        if self.env not in ENV_KINDS or self.knowledge not in ENV_KINDS:
            raise ValueError(f"env and knowledge must be one of {ENV_KINDS}")
        if self.mode not in MODE_KINDS:
            raise ValueError(f"mode must be one of {MODE_KINDS}, got {self.mode!r}")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"stop_rule must be one of {STOP_RULES}")
        if self.episodes < 1:
            raise ValueError("episodes must be positive")
        if self.mode == "fixed":
            if self.value < 1 or self.value != int(self.value):
                raise ValueError(f"fixed mode needs an integer horizon >= 1, got {self.value}")
        elif not 0.0 < self.value < 1.0:
            raise ValueError(f"sequential mode needs c in (0, 1), got {self.value}")
        if self.t_cap < 1:
            raise ValueError("t_cap must be positive")


@dataclass
class EvalSummary:
    agent: str
    env: str
    mode: str
    t_or_c: float
    episodes: int
    error: float
    error_ci95: float
    mean_stop_time: float
    seed: int
    seconds: float


def binomial_ci95(p_hat: float, n: int) -> float:
    """Normal-approximation 95% half-width: 1.96 * sqrt(p(1-p)/n)."""
    return 1.96 * np.sqrt(p_hat * (1.0 - p_hat) / n)


def _models(spec: EvalSpec, env_pair: EnvironmentPair):
    sim = env_pair.test if spec.env == "test" else env_pair.train
    knowledge = env_pair.test if spec.knowledge == "test" else env_pair.train
    return sim, knowledge


def _eval_block(spec: EvalSpec, env_pair: EnvironmentPair, bundle: AgentBundle | None,
                offset: int, count: int) -> tuple:
    """(error count, stop-time sum) for episodes [offset, offset+count)."""
    sim, knowledge = _models(spec, env_pair)
    prior = env_pair.prior

    if spec.agent == "composite":
        if bundle is None:
            raise ValueError("composite evaluation needs a trained agent bundle")
        if spec.mode == "fixed":
            horizon = int(spec.value)
            batch = simulate(sim, prior, PolicyAgent(bundle.policy), count, horizon,
                             spec.seed, episode_offset=offset)
            preds = classify_batch(bundle.inference, batch.actions, batch.observations)
            n_err = int(np.sum(preds != batch.hypotheses))
            return n_err, count * horizon
        cb = run_composite_batch(bundle, sim, prior, count, spec.value, spec.t_cap,
                                 spec.seed, episode_offset=offset)
        return int(np.sum(cb.inferred != cb.hypotheses)), int(cb.stop_times.sum())

    agent = ChernoffAgent(knowledge, prior) if spec.agent == "chernoff" else RandomAgent()
    horizon = int(spec.value) if spec.mode == "fixed" else spec.t_cap
    batch = simulate(sim, prior, agent, count, horizon, spec.seed,
                     episode_offset=offset, knowledge_model=knowledge)
    rows = np.arange(count)
    if spec.mode == "fixed":
        n_err = int(np.sum(batch.map_idx[:, -1] != batch.hypotheses))
        return n_err, count * horizon
    if spec.agent == "chernoff" and spec.stop_rule == "ll":
        stops = first_crossing_times(batch.ll, -np.log(spec.value))
        decisions = batch.ml_idx[rows, stops]
    else:
        stops = composite_stop_times(batch.gamma[:, 1:], spec.value)
        decisions = batch.map_idx[rows, stops]
    n_err = int(np.sum(decisions != batch.hypotheses))
    return n_err, int(stops.sum())


def _blocks(n: int) -> list:
    return [(off, min(BLOCK_EPISODES, n - off)) for off in range(0, n, BLOCK_EPISODES)]


def evaluate(spec: EvalSpec, env_pair: EnvironmentPair, bundle: AgentBundle | None = None,
             workers: int = 1) -> EvalSummary:
    """Run the whole evaluation; block-partitioned, worker-count invariant."""
    start = time.monotonic()
    blocks = _blocks(spec.episodes)
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                _eval_block,
                [spec] * len(blocks), [env_pair] * len(blocks), [bundle] * len(blocks),
                [b[0] for b in blocks], [b[1] for b in blocks],
            ))
    else:
        results = [_eval_block(spec, env_pair, bundle, off, cnt) for off, cnt in blocks]
    n_err = sum(r[0] for r in results)
    stop_sum = sum(r[1] for r in results)
    error = n_err / spec.episodes
    return EvalSummary(
        agent=spec.agent,
        env=spec.env,
        mode=spec.mode,
        t_or_c=spec.value,
        episodes=spec.episodes,
        error=error,
        error_ci95=float(binomial_ci95(error, spec.episodes)),
        mean_stop_time=stop_sum / spec.episodes,
        seed=spec.seed,
        seconds=time.monotonic() - start,
    )


def eval_fixed(agent: str, env_pair: EnvironmentPair, T: int, n: int, seed: int,
               env: str = "test", bundle: AgentBundle | None = None,
               knowledge: str = "test", workers: int = 1) -> EvalSummary:
    """Error rate of n episodes of exactly T steps."""
    spec = EvalSpec(agent=agent, env=env, mode="fixed", value=float(T),
                    episodes=n, seed=seed, knowledge=knowledge)
    return evaluate(spec, env_pair, bundle, workers)


def eval_sequential(agent: str, env_pair: EnvironmentPair, c: float, t_cap: int,
                    n: int, seed: int, env: str = "test",
                    bundle: AgentBundle | None = None, knowledge: str = "test",
                    stop_rule: str = "belief", workers: int = 1) -> EvalSummary:
    """Stop time and error under threshold c, capped at t_cap steps."""
    spec = EvalSpec(agent=agent, env=env, mode="sequential", value=c, episodes=n,
                    seed=seed, t_cap=t_cap, knowledge=knowledge, stop_rule=stop_rule)
    return evaluate(spec, env_pair, bundle, workers)


def summaries_to_csv(summaries, timing: bool = False) -> str:
    """One row per summary with the standard result columns.

    Seconds are written as 0.0 unless ``timing`` is requested: wall-clock
    values would make otherwise-identical reruns differ byte-wise.
    """
    lines = [",".join(RESULT_COLUMNS)]
    for s in summaries:
        seconds = s.seconds if timing else 0.0
        lines.append(
            f"{s.agent},{s.env},{s.mode},{s.t_or_c:g},{s.episodes},"
            f"{s.error:.6f},{s.error_ci95:.6f},{s.mean_stop_time:.4f},"
            f"{s.seed},{seconds:.3f}"
        )
    return "\n".join(lines) + "\n"


def compare_report(summaries) -> str:
    """Plain-text pivot: one row per horizon/threshold, one column per agent."""
    if not summaries:
        raise ValueError("need at least one summary")
    agents = []
    for s in summaries:
        if s.agent not in agents:
            agents.append(s.agent)
    values = sorted({s.t_or_c for s in summaries})
    sequential = any(s.mode == "sequential" for s in summaries)
    label = "c" if sequential else "T"
    cells = {}
    for s in summaries:
        text = f"{s.error:.4f} ±{s.error_ci95:.4f}"
        if s.mode == "sequential":
            text += f", stop {s.mean_stop_time:.2f}"
        cells[(s.t_or_c, s.agent)] = text
    widths = {agent: max(len(agent), max((len(cells.get((v, agent), "")) for v in values),
                                         default=0))
              for agent in agents}
    header = [label.ljust(8)] + [a.ljust(widths[a]) for a in agents]
    lines = ["  ".join(header).rstrip()]
    for v in values:
        row = [f"{v:g}".ljust(8)]
        row += [cells.get((v, a), "-").ljust(widths[a]) for a in agents]
        lines.append("  ".join(row).rstrip())
    return "\n".join(lines) + "\n"


def sample_efficiency_sweep(
    policy: PolicyModel,
    env_pair: EnvironmentPair,
    sizes,
    T: int,
    eval_n: int,
    seed: int,
    arch: DecoderArch = DecoderArch(hidden_size=64, n_layers=1),
    training: TrainingConfig = TrainingConfig(),
    workers: int = 1,
) -> list:
    """Retrain the decoder at several dataset sizes; error at fixed horizon T.

    Training episodes come from the training environment; every size is
    evaluated on the same testing-environment episodes (shared seed), so the
    comparison across sizes is paired.
    """
    rows = []
    for k, size in enumerate(sizes):
        gen_seed = int(np.random.SeedSequence((seed, k)).generate_state(1)[0])
        ds = gen_fixed_dataset(policy, env_pair.train, env_pair.prior, int(size), T, gen_seed)
        result = train_inference(ds, arch, training, rng=np.random.default_rng(gen_seed))
        bundle = AgentBundle(policy=policy, inference=result.model)
        summary = eval_fixed("composite", env_pair, T, eval_n, seed,
                             bundle=bundle, workers=workers)
        rows.append({"size": int(size), "error": summary.error,
                     "error_ci95": summary.error_ci95})
    return rows


def sweep_to_csv(rows) -> str:
    lines = ["size,error,error_ci95"]
    for row in rows:
        lines.append(f"{row['size']},{row['error']:.6f},{row['error_ci95']:.6f}")
    return "\n".join(lines) + "\n"
