"""Three-phase training orchestration and the composite stop/infer agent.

Phase 1 trains the action policy with reinforcement learning on the training
environment.  Phase 2 generates policy episodes with uniformly random
horizons, labels each with the final belief-error statistic, and fits the
monitor (a regressor that estimates that statistic from the raw sequence
alone).  Phase 3 generates episodes that stop when the monitor's estimate
drops below the threshold c — or at the horizon cap — and fits the hypothesis
decoder on the stopped sequences.  The fixed-horizon variant skips phase 2
and trains the decoder on constant-length episodes.

Everything before execution touches only the training environment; the
composite agent (policy + monitor + decoder) later runs on the testing
environment, never having seen its probabilities.

Artifact layout for a run: ``<base>/<run_id>/{policy,monitor,inference}.ckpt``
plus ``report.csv``, ``learning_curve.csv``, and ``manifest.json``.  A rerun
with the same config reproduces every file byte for byte.
"""

from __future__ import annotations

import shutil
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .data import SequenceDataset, dataset_from_batch, filter_dataset
from .decoders import (
    DecoderArch,
    SequenceModel,
    TrainingConfig,
    classify_batch,
    monitor_stepper,
    train_inference,
    train_monitor,
)
from .engine import EpisodeBatch, simulate
from .env import EnvironmentPair, ObservationModel, four_sensor_pair, load_env_config, two_sensor_pair
from .persist import (
    RunManifest,
    file_sha256,
    load_decoder_checkpoint,
    load_policy_checkpoint,
    save_decoder_checkpoint,
    save_manifest,
    save_policy_checkpoint,
)
from .policy import PolicyAgent, PolicyModel, PpoConfig, save_learning_curve, train_policy

MONITOR_LABELS = ("gamma", "confidence", "ll_gap", "ml_index")
LL_DISCARD_ABOVE = 100.0
# monitor estimates are clamped into the open unit interval before the
# threshold comparison, so c >= 1 always stops at t=1 and c <= 0 never stops
_SCORE_LO = 1e-12
_SCORE_HI = 1.0 - 1e-12


class PipelineError(RuntimeError):
    """A phase failed or the run configuration/directory is unusable."""


@dataclass(frozen=True)
class PipelineConfig:
    run_id: str
    env: str = "two_sensor"
    mode: str = "sequential"  # "sequential" (adaptive stop) | "fixed" (constant T)
    fixed_horizon: int = 10
    threshold_c: float = 0.2
    t_cap: int = 50
    ppo: PpoConfig = PpoConfig()
    monitor_size: int = 20000
    monitor_horizon_min: int = 1
    monitor_horizon_max: int = 50
    monitor_label: str = "gamma"
    inference_size: int = 20000
    monitor_arch: DecoderArch = DecoderArch(hidden_size=64, n_layers=1)
    inference_arch: DecoderArch = DecoderArch(hidden_size=64, n_layers=1, bidirectional=True)
    monitor_training: TrainingConfig = TrainingConfig()
    inference_training: TrainingConfig = TrainingConfig()
    seed_policy: int = 1
    seed_monitor: int = 2
    seed_inference: int = 3

    def __post_init__(self):
        if not self.run_id or "/" in self.run_id:
            raise PipelineError(f"run_id must be a plain name, got {self.run_id!r}")
        if self.mode not in ("sequential", "fixed"):
            raise PipelineError(f"mode must be 'sequential' or 'fixed', got {self.mode!r}")
        if not 0.0 < self.threshold_c < 1.0:
            raise PipelineError(f"threshold_c must lie in (0, 1), got {self.threshold_c}")
        if self.fixed_horizon < 1 or self.t_cap < 1:
            raise PipelineError("horizons must be positive")
        if not 1 <= self.monitor_horizon_min <= self.monitor_horizon_max:
            raise PipelineError("need 1 <= monitor_horizon_min <= monitor_horizon_max")
        if self.monitor_size < 1 or self.inference_size < 1:
            raise PipelineError("dataset sizes must be positive")
        if self.monitor_label not in MONITOR_LABELS:
            raise PipelineError(f"monitor_label must be one of {MONITOR_LABELS}")
        if self.monitor_arch.bidirectional:
            raise PipelineError("the monitor must be unidirectional (it scores prefixes online)")

    @property
    def policy_horizon(self) -> int:
        return self.fixed_horizon if self.mode == "fixed" else self.t_cap


def pipeline_config_from_dict(doc: dict) -> PipelineConfig:
    """Build a config from a parsed document (nested sections optional)."""
    doc = dict(doc)
    nested = {
        "ppo": PpoConfig,
        "monitor_arch": DecoderArch,
        "inference_arch": DecoderArch,
        "monitor_training": TrainingConfig,
        "inference_training": TrainingConfig,
    }
    kwargs = {}
    try:
        for key, value in doc.items():
            if key in nested:
                kwargs[key] = nested[key](**value)
            else:
                kwargs[key] = value
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise PipelineError(f"bad pipeline config: {exc}") from exc


def resolve_env_pair(name_or_path: str) -> EnvironmentPair:
    """Builtin environment name or path to an environment config file."""
    builtins = {"two_sensor": two_sensor_pair, "four_sensor": four_sensor_pair}
    if name_or_path in builtins:
        return builtins[name_or_path]()
    return load_env_config(name_or_path)


def gen_monitor_dataset(
    policy: PolicyModel,
    model: ObservationModel,
    prior: np.ndarray,
    n: int,
    horizon_range: tuple,
    master_seed: int,
    label: str = "gamma",
) -> SequenceDataset:
    """Policy episodes with uniform random horizons, labeled at the final step.

    Episodes run on the given (training) model; the label is the belief
    tracker's statistic after the last observation.  Log-likelihood-gap
    targets above 100 are discarded (they are numerically extreme outliers
    that dominate a squared loss without changing any stop decision).
    """
    lo, hi = int(horizon_range[0]), int(horizon_range[1])
    if not 1 <= lo <= hi:
        raise ValueError(f"bad horizon range {horizon_range}")
    horizons = np.random.default_rng(master_seed).integers(lo, hi + 1, size=n)
    batch = simulate(model, prior, PolicyAgent(policy), n, hi, master_seed)
    ds = dataset_from_batch(batch, horizons, label=label, model=model, prior=prior)
    if label == "ll_gap":
        ds = filter_dataset(ds, lambda item: item.label <= LL_DISCARD_ABOVE)
    return ds


def monitor_score_matrix(monitor: SequenceModel, actions: np.ndarray,
                         observations: np.ndarray) -> np.ndarray:
    """Monitor estimate after each prefix: (B, T) scores for (B, T) episodes."""
    actions = np.asarray(actions, dtype=np.int64)
    observations = np.asarray(observations, dtype=np.int64)
    B, T = actions.shape
    stepper = monitor_stepper(monitor, B)
    n_a, n_y = monitor.n_actions, monitor.n_observations
    rows = np.arange(B)
    scores = np.empty((B, T))
    for t in range(T):
        x = np.zeros((B, n_a + n_y))
        x[rows, actions[:, t]] = 1.0
        x[rows, n_a + observations[:, t]] = 1.0
        scores[:, t] = stepper.step(x)[:, 0]
    return scores


def composite_stop_times(scores: np.ndarray, c: float, t_cap: int | None = None) -> np.ndarray:
    """First step whose clamped score drops below c, else the final step.

    The trajectory does not depend on c (the policy never sees the
    threshold), so stopping can be evaluated on the full score matrix;
    an episode stopped online would have produced the same prefix.
    """
    clamped = np.clip(scores, _SCORE_LO, _SCORE_HI)
    below = clamped < c
    stop = np.argmax(below, axis=1) + 1
    never = ~below.any(axis=1)
    stop[never] = scores.shape[1]
    if t_cap is not None:
        stop = np.minimum(stop, t_cap)
    return stop


def gen_inference_dataset(
    policy: PolicyModel,
    monitor: SequenceModel,
    model: ObservationModel,
    prior: np.ndarray,
    n: int,
    c: float,
    t_cap: int,
    master_seed: int,
) -> SequenceDataset:
    """Policy episodes truncated by the monitor's stop rule, labeled with the hypothesis."""
    batch = simulate(model, prior, PolicyAgent(policy), n, t_cap, master_seed)
    scores = monitor_score_matrix(monitor, batch.actions, batch.observations)
    stops = composite_stop_times(scores, c)
    return dataset_from_batch(batch, stops, label="hypothesis", model=model, prior=prior)


def gen_fixed_dataset(
    policy: PolicyModel,
    model: ObservationModel,
    prior: np.ndarray,
    n: int,
    horizon: int,
    master_seed: int,
) -> SequenceDataset:
    """Constant-horizon policy episodes labeled with the true hypothesis."""
    batch = simulate(model, prior, PolicyAgent(policy), n, horizon, master_seed)
    horizons = np.full(n, horizon)
    return dataset_from_batch(batch, horizons, label="hypothesis", model=model, prior=prior)


@dataclass
class EpisodeResult:
    """One composite-agent episode: what it saw, guessed, and believed."""

    hypothesis: int
    inferred: int
    stop_time: int
    monitor_scores: np.ndarray

    @property
    def correct(self) -> bool:
        return self.hypothesis == self.inferred


@dataclass
class CompositeBatch:
    """Vectorized composite-agent episodes (diagnostic arrays per episode)."""

    hypotheses: np.ndarray
    inferred: np.ndarray
    stop_times: np.ndarray
    scores: np.ndarray
    episode_batch: EpisodeBatch

    @property
    def n_episodes(self) -> int:
        return self.hypotheses.shape[0]

    @property
    def error(self) -> float:
        return float(np.mean(self.inferred != self.hypotheses))

    @property
    def mean_stop_time(self) -> float:
        return float(self.stop_times.mean())

    def result(self, i: int) -> EpisodeResult:
        stop = int(self.stop_times[i])
        return EpisodeResult(
            hypothesis=int(self.hypotheses[i]),
            inferred=int(self.inferred[i]),
            stop_time=stop,
            monitor_scores=self.scores[i, :stop].copy(),
        )


@dataclass
class AgentBundle:
    """The trained networks the composite agent executes with."""

    policy: PolicyModel
    inference: SequenceModel
    monitor: SequenceModel | None = None


def run_composite_batch(
    bundle: AgentBundle,
    model: ObservationModel,
    prior: np.ndarray,
    n: int,
    c: float,
    t_cap: int,
    master_seed: int,
    episode_offset: int = 0,
) -> CompositeBatch:
    """Run the stop/infer loop on ``model`` (normally the testing environment)."""
    if bundle.monitor is None:
        raise PipelineError("sequential composite execution needs a monitor")
    batch = simulate(model, prior, PolicyAgent(bundle.policy), n, t_cap,
                     master_seed, episode_offset)
    scores = monitor_score_matrix(bundle.monitor, batch.actions, batch.observations)
    stops = composite_stop_times(scores, c)
    inferred = np.empty(n, dtype=np.int64)
    for length in np.unique(stops):
        idx = np.flatnonzero(stops == length)
        inferred[idx] = classify_batch(
            bundle.inference, batch.actions[idx, :length], batch.observations[idx, :length]
        )
    return CompositeBatch(hypotheses=batch.hypotheses, inferred=inferred,
                          stop_times=stops, scores=scores, episode_batch=batch)


def run_composite_episode(
    bundle: AgentBundle,
    model: ObservationModel,
    prior: np.ndarray,
    c: float,
    t_cap: int,
    master_seed: int,
    episode_index: int = 0,
) -> EpisodeResult:
    """One composite episode on the stream (master_seed, episode_index)."""
    batch = run_composite_batch(bundle, model, prior, 1, c, t_cap,
                                master_seed, episode_offset=episode_index)
    return batch.result(0)


def _report_rows(rows) -> str:
    lines = ["phase,metric,value"]
    for phase, metric, value in rows:
        if isinstance(value, float):
            lines.append(f"{phase},{metric},{value:.6f}")
        else:
            lines.append(f"{phase},{metric},{value}")
    return "\n".join(lines) + "\n"


def run_pipeline(config: PipelineConfig, base_dir, force: bool = False):
    """Execute all phases; returns (run_dir, manifest, bundle).

    The run directory must not already exist unless ``force`` is given.
    """
    base = Path(base_dir)
    run_dir = base / config.run_id
    if run_dir.exists():
        if not force:
            raise PipelineError(
                f"run directory {run_dir} already exists (use force to replace it)"
            )
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)

    env_pair = resolve_env_pair(config.env)
    report = []
    artifacts = {}

    def finish_artifact(name: str):
        artifacts[name] = file_sha256(run_dir / name)

    # ---- phase 1: reinforcement learning on the training environment ----
    try:
        ppo = replace(config.ppo, horizon=config.policy_horizon)
        policy, curve, _ = train_policy(env_pair, ppo, seed=config.seed_policy)
        save_policy_checkpoint(run_dir / "policy.ckpt", policy, seed=config.seed_policy,
                               extra_metadata={"phase": 1, "horizon": ppo.horizon})
        save_learning_curve(curve, run_dir / "learning_curve.csv")
        finish_artifact("policy.ckpt")
        finish_artifact("learning_curve.csv")
        report += [
            ("policy", "episodes_trained", curve[-1]["episodes_trained"]),
            ("policy", "train_env_error", curve[-1]["train_env_error"]),
            ("policy", "mean_episode_reward", curve[-1]["mean_episode_reward"]),
        ]
    except Exception as exc:
        raise PipelineError(f"phase 1 (policy) failed: {exc}") from exc

    # ---- phase 2: monitor regression (skipped in fixed-horizon mode) ----
    monitor = None
    if config.mode == "sequential":
        try:
            ds = gen_monitor_dataset(
                policy, env_pair.train, env_pair.prior, config.monitor_size,
                (config.monitor_horizon_min, config.monitor_horizon_max),
                master_seed=config.seed_monitor, label=config.monitor_label,
            )
            result = train_monitor(ds, config.monitor_arch, config.monitor_training,
                                   rng=np.random.default_rng(config.seed_monitor))
            monitor = result.model
            save_decoder_checkpoint(run_dir / "monitor.ckpt", monitor,
                                    seed=config.seed_monitor,
                                    extra_metadata={"phase": 2, "label": config.monitor_label})
            finish_artifact("monitor.ckpt")
            report += [
                ("monitor", "dataset_size", len(ds.items)),
                ("monitor", "test_mae", result.report.mae),
            ]
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(f"phase 2 (monitor) failed: {exc}") from exc

    # ---- phase 3: hypothesis decoder on stopped (or fixed-length) episodes ----
    try:
        if config.mode == "sequential":
            ds = gen_inference_dataset(
                policy, monitor, env_pair.train, env_pair.prior, config.inference_size,
                config.threshold_c, config.t_cap, master_seed=config.seed_inference,
            )
        else:
            ds = gen_fixed_dataset(
                policy, env_pair.train, env_pair.prior, config.inference_size,
                config.fixed_horizon, master_seed=config.seed_inference,
            )
        result = train_inference(ds, config.inference_arch, config.inference_training,
                                 rng=np.random.default_rng(config.seed_inference))
        inference = result.model
        save_decoder_checkpoint(run_dir / "inference.ckpt", inference,
                                seed=config.seed_inference, extra_metadata={"phase": 3})
        finish_artifact("inference.ckpt")
        report += [
            ("inference", "dataset_size", len(ds.items)),
            ("inference", "mean_sequence_length", float(np.mean([i.length for i in ds.items]))),
            ("inference", "test_f1", result.report.f1),
        ]
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(f"phase 3 (inference) failed: {exc}") from exc

    (run_dir / "report.csv").write_text(_report_rows(report), encoding="utf-8")
    finish_artifact("report.csv")

    manifest = RunManifest(
        run_id=config.run_id,
        seed=config.seed_policy,
        config=asdict(config),
        artifacts=dict(sorted(artifacts.items())),
    )
    save_manifest(manifest, run_dir / "manifest.json")
    return run_dir, manifest, AgentBundle(policy=policy, inference=inference, monitor=monitor)


def load_bundle(run_dir) -> AgentBundle:
    """Reload a run's trained networks from its checkpoints."""
    run_dir = Path(run_dir)
    policy, _ = load_policy_checkpoint(run_dir / "policy.ckpt")
    inference, _ = load_decoder_checkpoint(run_dir / "inference.ckpt",
                                           expected_kind="inference")
    monitor = None
    if (run_dir / "monitor.ckpt").exists():
        monitor, _ = load_decoder_checkpoint(run_dir / "monitor.ckpt",
                                             expected_kind="monitor")
    return AgentBundle(policy=policy, inference=inference, monitor=monitor)
