"""Train the belief-free recurrent policy with clipped-surrogate updates.

The policy is a one-layer GRU actor-critic that sees only its own previous
action and the raw observation (one-hot), never the belief vector.  Its
per-step reward is the *improvement* in posterior error, gamma_{t-1} -
gamma_t, computed by the simulator from quantities the network itself never
receives; the per-episode return telescopes to gamma_0 - gamma_T, so the
policy is optimizing exactly the final decision quality.

This demo trains at a reduced budget (6000 episodes, ~15 s) to show the
learning dynamics; the package defaults (30000 episodes, hidden 32) are what
the shipped two_sensor_T10 pipeline config uses.
"""

import numpy as np

from asht import PolicyAgent, PpoConfig, train_policy, two_sensor_pair
from asht.engine import simulate
from asht.evaluation import BLOCK_EPISODES

pair = two_sensor_pair()
config = PpoConfig(horizon=10, total_episodes=6000, batch_episodes=512,
                   hidden_size=32, eval_every=1024, eval_episodes=1000)

policy, curve, _ = train_policy(pair, config, seed=1)

print(f"{'episodes':>9}  {'train error':>11}  {'mean reward':>11}")
for row in curve:
    print(f"{row['episodes_trained']:>9}  {row['train_env_error']:>11.4f}"
          f"  {row['mean_episode_reward']:>11.4f}")

# How does it behave on the shifted testing environment it never saw?
batch = simulate(pair.test, pair.prior, PolicyAgent(policy), BLOCK_EPISODES, 10,
                 master_seed=99)
test_error = float(np.mean(batch.map_idx[:, -1] != batch.hypotheses))
print(f"\ntest-environment error (MAP decode, {BLOCK_EPISODES} episodes): {test_error:.4f}")
print("(the full pipeline replaces MAP with a learned inference decoder;")
print(" see 05_full_pipeline.py)")

counts = np.bincount(batch.actions.ravel(), minlength=pair.train.n_actions)
print(f"action usage on test episodes: {counts / counts.sum()}")
