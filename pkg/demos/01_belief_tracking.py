"""Bayesian belief tracking in a finite-alphabet sensing environment.

The core object of the whole library: a posterior over hypotheses, updated
one (action, observation) pair at a time.  This script walks a single
episode of the built-in two-sensor environment step by step, printing the
belief vector, its error probability gamma = 1 - max rho, and the running
MAP estimate, then verifies the first update against the same computation
done longhand.
"""

import numpy as np

from asht import (
    error_probability,
    initial_belief,
    map_decode,
    sample_hypothesis,
    sample_observation,
    two_sensor_pair,
    update_belief,
)

pair = two_sensor_pair()
model = pair.train
rng = np.random.default_rng(7)

truth = sample_hypothesis(pair.prior, rng)
state = initial_belief(pair.prior)
print(f"true hypothesis: {truth}  (sensor-A bit {truth & 1}, sensor-B bit {truth >> 1})")
print(f"{'t':>2}  {'action':>6}  {'obs':>3}  {'belief':<36}  {'gamma':>6}  MAP")
print(f"{0:>2}  {'-':>6}  {'-':>3}  {np.array2string(state.rho, precision=3):<36}"
      f"  {error_probability(state):>6.3f}  {map_decode(state)}")

for t in range(1, 9):
    action = int(rng.integers(model.n_actions))  # explore uniformly
    obs = sample_observation(model, truth, action, rng)
    state = update_belief(state, action, obs, model)
    print(f"{t:>2}  {model.actions[action]:>6}  {obs:>3}"
          f"  {np.array2string(state.rho, precision=3):<36}"
          f"  {error_probability(state):>6.3f}  {map_decode(state)}")

print(f"\nfinal MAP guess: {map_decode(state)}  (truth {truth})")

# The same first update, longhand: rho'(i) proportional to rho(i) * p_i^a(y).
state0 = initial_belief(pair.prior)
action, obs = 0, 1
lik = model.table[action, :, obs]
by_hand = pair.prior * lik / np.sum(pair.prior * lik)
via_lib = update_belief(state0, action, obs, model).rho
print("\nhand-computed first update:", np.array2string(by_hand, precision=6))
print("library first update:      ", np.array2string(via_lib, precision=6))
assert np.allclose(by_hand, via_lib, atol=1e-15)
print("identical (1e-15)")
