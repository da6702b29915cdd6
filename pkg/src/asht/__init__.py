"""Active sequential hypothesis testing laboratory.

Exact belief-based baselines (maximin KL / Chernoff-style action selection
with a log-likelihood stopping rule) and belief-free recurrent agents (policy,
stop/continue monitor, hypothesis decoder) trained in three phases, evaluated
on paired training/testing environments.
"""

from .belief import (
    BeliefState,
    InconsistentObservationError,
    confidence,
    error_probability,
    initial_belief,
    log_likelihood_index,
    map_decode,
    update_belief,
)
from .chernoff import (
    ActionDistribution,
    KlMatrix,
    chernoff_action,
    default_exploration_schedule,
    kl_divergence,
    kl_matrix,
    ll_stop,
    maximin_action_distribution,
)
from .env import (
    EnvConfigError,
    EnvironmentPair,
    EpisodeRng,
    ObservationModel,
    build_bernoulli_env,
    episode_stream,
    four_sensor_pair,
    load_env_config,
    product_sensor_env,
    sample_hypothesis,
    sample_observation,
    save_env_config,
    two_sensor_pair,
)
from .policy import (
    NonFiniteLossError,
    PolicyAgent,
    PolicyModel,
    PpoConfig,
    RolloutBatch,
    build_policy_inputs,
    clipped_surrogate,
    forward_policy,
    gae,
    init_policy,
    ppo_update,
    rollout,
    save_learning_curve,
    train_policy,
)

__version__ = "0.1.0"
