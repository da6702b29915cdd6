"""Can a recurrent net emulate exact Bayesian statistics from raw sequences?

Train two decoders on (action, observation) prefixes generated by the
exact-belief baseline in the training environment:

- the *inference* decoder predicts the running maximum-likelihood
  hypothesis index (a classification target);
- the *monitor* predicts the posterior error gamma (a regression target).

Then probe them on sequences from the *shifted testing* environment.  The
held-out labels are computed by replaying the training model's belief over
the test-environment observations: a decoder trained against the training
model emulates that model's statistics, so that replay is the matching
ground truth.  Reduced scale (~1 min); the package-default study uses 20000
sequences and wider nets.
"""

import numpy as np

from asht.data import dataset_from_batch
from asht.decoders import (
    DecoderArch,
    TrainingConfig,
    classify,
    monitor_score,
    train_inference,
    train_monitor,
)
from asht.engine import ChernoffAgent, simulate
from asht.env import two_sensor_pair

pair = two_sensor_pair()
N_TRAIN, N_TEST, H = 6000, 1000, 30
arch = DecoderArch(hidden_size=64, bidirectional=True)
training = TrainingConfig(epochs=12)

print(f"generating {N_TRAIN} training-environment sequences (horizons 1..{H})...")
agent = ChernoffAgent(pair.train, pair.prior)
batch = simulate(pair.train, pair.prior, agent, N_TRAIN, H, master_seed=11)
horizons = np.random.default_rng(11).integers(1, H + 1, size=N_TRAIN)
cls_ds = dataset_from_batch(batch, horizons, "ml_index", pair.train, pair.prior)
mon_ds = dataset_from_batch(batch, horizons, "gamma", pair.train, pair.prior)

print("training the decoders...")
inference = train_inference(cls_ds, arch, training, rng=np.random.default_rng(1)).model
monitor = train_monitor(mon_ds, arch, training, rng=np.random.default_rng(2)).model

print(f"probing on {N_TEST} shifted testing-environment sequences...")
test_batch = simulate(pair.test, pair.prior, ChernoffAgent(pair.test, pair.prior),
                      N_TEST, H, master_seed=99)
test_h = np.random.default_rng(99).integers(1, H + 1, size=N_TEST)
# belief_model=pair.train: labels = the training model's statistics replayed
# over observations the training model never generated.
cls_test = dataset_from_batch(test_batch, test_h, "ml_index", pair.test, pair.prior,
                              belief_model=pair.train)
mon_test = dataset_from_batch(test_batch, test_h, "gamma", pair.test, pair.prior,
                              belief_model=pair.train)

preds = np.array([classify(inference, it.actions, it.observations)[0]
                  for it in cls_test.items])
labels = np.array([it.label for it in cls_test.items])
agree = float(np.mean(preds == labels))

errors = [abs(monitor_score(monitor, it.actions, it.observations) - it.label)
          for it in mon_test.items]
mae = float(np.mean(errors))

print(f"\ninference decoder vs exact ML index:  agreement {agree:.4f}")
print(f"monitor vs exact gamma:               MAE {mae:.5f}")

print("\nsample of monitor estimates (test-env sequences):")
print(f"{'len':>4}  {'exact gamma':>11}  {'monitor':>8}")
for it in mon_test.items[:8]:
    est = monitor_score(monitor, it.actions, it.observations)
    print(f"{len(it.actions):>4}  {it.label:>11.4f}  {est:>8.4f}")
