"""Model-based baseline: maximin KL action selection and the LL stopping rule.

At each step the baseline estimates the most likely hypothesis i_hat and
samples its next action from the distribution g maximizing the worst-case
discrimination rate

    max_g min_{j != i_hat} sum_a g(a) D(p_{i_hat}^a || p_j^a),

occasionally replaced by a uniformly random action so that every action is
sampled infinitely often.  The episode stops once the log-likelihood gap
between the two leading hypotheses exceeds -ln c.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .belief import BeliefState, log_likelihood_index
from .env import ObservationModel

# Cap applied to infinite KL entries before the linear program; only reached
# with deterministic sensors.
KL_CAP = 1e6


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """D(p || q) = sum_y p(y) ln(p(y)/q(y)) for finite distributions.

    Terms with p(y)=0 contribute 0; returns +inf if p puts mass where q has
    none.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"support mismatch: {p.shape} vs {q.shape}")
    for name, dist in (("p", p), ("q", q)):
        if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a probability distribution (sum={dist.sum()!r})")
    support = p > 0.0
    if np.any(q[support] == 0.0):
        return float("inf")
    return float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))


@dataclass(frozen=True)
class KlMatrix:
    """Per-action KL divergences from hypothesis ``i_hat`` to every alternative.

    ``d[a][k]`` is D(p_{i_hat}^a || p_{alternatives[k]}^a); ``alternatives``
    lists the hypothesis indices j != i_hat in increasing order.
    """

    d: np.ndarray
    i_hat: int
    alternatives: tuple


def kl_matrix(model: ObservationModel, i_hat: int) -> KlMatrix:
    """KL divergence table D[a][j] for the current best estimate i_hat."""
    if not 0 <= i_hat < model.n_hypotheses:
        raise IndexError(f"i_hat {i_hat} out of range [0, {model.n_hypotheses})")
    alternatives = tuple(j for j in range(model.n_hypotheses) if j != i_hat)
    d = np.empty((model.n_actions, len(alternatives)))
    for a in range(model.n_actions):
        for k, j in enumerate(alternatives):
            d[a, k] = kl_divergence(model.table[a, i_hat], model.table[a, j])
    return KlMatrix(d=d, i_hat=i_hat, alternatives=alternatives)


@dataclass(frozen=True)
class ActionDistribution:
    """Maximin action distribution g and the objective value it attains."""

    g: np.ndarray
    value: float
    indistinguishable: bool = False


def maximin_action_distribution(kl: KlMatrix) -> ActionDistribution:
    """Solve max_g min_j sum_a g(a) d[a][j] over the action simplex.

    Formulated as the linear program "maximize z subject to
    sum_a g(a) d[a][j] >= z for every alternative j, g in the simplex" and
    solved exactly with HiGHS.  Infinite entries are capped at ``KL_CAP``
    first.  An all-zero matrix (i_hat indistinguishable from every
    alternative) yields the uniform distribution with value 0, flagged via
    ``indistinguishable``.
    """
    d = np.minimum(np.asarray(kl.d, dtype=np.float64), KL_CAP)
    if d.ndim != 2 or d.shape[1] < 1:
        raise ValueError("KL matrix must have at least one alternative column")
    n_actions = d.shape[0]
    if not d.any():
        return ActionDistribution(
            g=np.full(n_actions, 1.0 / n_actions), value=0.0, indistinguishable=True
        )
    if n_actions == 1:
        return ActionDistribution(g=np.ones(1), value=float(d[0].min()))
    # Variables x = (g_0..g_{A-1}, z); minimize -z.
    n_alt = d.shape[1]
    c = np.zeros(n_actions + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-d.T, np.ones((n_alt, 1))])  # z - g.d_j <= 0
    b_ub = np.zeros(n_alt)
    a_eq = np.ones((1, n_actions + 1))
    a_eq[0, -1] = 0.0
    b_eq = np.ones(1)
    bounds = [(0.0, None)] * n_actions + [(0.0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"maximin LP failed: {res.message}")
    g = np.clip(res.x[:n_actions], 0.0, None)
    g /= g.sum()
    return ActionDistribution(g=g, value=float(res.x[-1]))


def default_exploration_schedule(t: int) -> float:
    """Probability of replacing the maximin draw with a uniform action.

    ``t`` is the 1-based index of the action about to be taken; min(1, 1/t)
    decays slowly enough that every action recurs infinitely often.
    """
    if t < 1:
        return 1.0
    return min(1.0, 1.0 / t)


def estimate_hypothesis(state: BeliefState, prior: np.ndarray | None = None) -> int:
    """Current best guess: maximum-likelihood once observations exist.

    Before the first observation the cumulative log-likelihoods are all zero,
    so the estimate falls back to the prior's argmax (index 0 under a uniform
    prior); with ``prior=None`` the state's own belief serves as the prior.
    """
    if state.t == 0:
        ref = state.rho if prior is None else np.asarray(prior, dtype=np.float64)
        return int(np.argmax(ref))
    _, i_hat = log_likelihood_index(state)
    return i_hat


def chernoff_action(
    state: BeliefState,
    model: ObservationModel,
    rng: np.random.Generator,
    schedule: Callable[[int], float] = default_exploration_schedule,
) -> int:
    """Sample the next action for the modified maximin test.

    With probability ``schedule(t)`` (t = 1-based index of this action) the
    action is uniform over all actions; otherwise it is drawn from the
    maximin distribution for the current hypothesis estimate.
    """
    eps = schedule(state.t + 1)
    if rng.random() < eps:
        return int(rng.integers(model.n_actions))
    dist = maximin_action_distribution(kl_matrix(model, estimate_hypothesis(state)))
    return int(rng.choice(model.n_actions, p=dist.g))


def ll_stop(state: BeliefState, c: float) -> bool:
    """Stopping rule: stop (True) once the log-likelihood gap exceeds -ln c."""
    if not 0.0 < c < 1.0:
        raise ValueError(f"tolerance c must lie in (0, 1), got {c}")
    if state.t == 0:
        return False
    ll, _ = log_likelihood_index(state)
    return ll > -np.log(c)
