"""Exact Bayesian bookkeeping for a single episode.

Tracks the posterior over hypotheses (the belief vector) together with the
per-hypothesis cumulative log-likelihood of the realized action/observation
sequence.  All logarithms are natural, so log-likelihood thresholds compare
against ``-ln c``.

Operations are pure: each returns a new :class:`BeliefState`, so states can
be shared freely across concurrent episodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .env import ObservationModel

# Belief entries are clamped to this range inside confidence() only; the
# stored posterior itself is never clamped.
CONF_CLAMP = 1e-12


class InconsistentObservationError(ValueError):
    """The observation has zero likelihood under every hypothesis with mass."""


@dataclass(frozen=True)
class BeliefState:
    """Posterior ``rho`` plus cumulative log-likelihoods ``loglik`` after ``t`` steps."""

    rho: np.ndarray
    loglik: np.ndarray
    t: int

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        loglik = np.asarray(self.loglik, dtype=np.float64)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "loglik", loglik)
        if rho.shape != loglik.shape or rho.ndim != 1:
            raise ValueError("rho and loglik must be 1-d vectors of equal length")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-10:
            raise ValueError(f"rho is not a probability vector (sum={rho.sum()!r})")

    @property
    def n_hypotheses(self) -> int:
        return self.rho.shape[0]


def initial_belief(prior: np.ndarray) -> BeliefState:
    """State at t=0: belief equals the prior, log-likelihoods are zero."""
    prior = np.asarray(prior, dtype=np.float64)
    return BeliefState(rho=prior.copy(), loglik=np.zeros_like(prior), t=0)


def update_belief(
    state: BeliefState, action: int, observation: int, model: ObservationModel
) -> BeliefState:
    """One Bayes step: rho'(i) = rho(i) p_i^a(y) / sum_j rho(j) p_j^a(y).

    The new belief is computed in log-space and normalized with logsumexp;
    hypotheses with zero prior mass stay at exactly zero.  Raises
    :class:`InconsistentObservationError` if the observation is impossible
    under every hypothesis that still has mass.
    """
    lik = model.likelihoods(action, observation)
    with np.errstate(divide="ignore"):
        log_w = np.where(state.rho > 0.0, np.log(state.rho) + np.log(lik), -np.inf)
    norm = logsumexp(log_w)
    if not np.isfinite(norm):
        raise InconsistentObservationError(
            f"observation {observation} after action {action} has zero likelihood "
            "under every hypothesis with positive belief"
        )
    rho_new = np.exp(log_w - norm)
    rho_new /= rho_new.sum()  # remove residual rounding
    with np.errstate(divide="ignore"):
        loglik_new = state.loglik + np.log(lik)
    return BeliefState(rho=rho_new, loglik=loglik_new, t=state.t + 1)


def error_probability(state: BeliefState) -> float:
    """Probability that the MAP guess is wrong: 1 - max_i rho(i)."""
    return float(1.0 - state.rho.max())


def confidence(state: BeliefState) -> float:
    """Belief-weighted average log-odds: sum_i rho(i) ln(rho(i)/(1-rho(i))).

    Entries are clamped to [1e-12, 1-1e-12] before the logarithm, which
    removes the singularities at 0 and 1.
    """
    return confidence_from_rho(state.rho)


def confidence_from_rho(rho: np.ndarray) -> float:
    """The confidence statistic straight from a posterior vector."""
    rho = np.asarray(rho, dtype=np.float64)
    clamped = np.clip(rho, CONF_CLAMP, 1.0 - CONF_CLAMP)
    return float(np.sum(rho * (np.log(clamped) - np.log1p(-clamped))))


def log_likelihood_index(state: BeliefState) -> tuple[float, int]:
    """Gap between the best and second-best cumulative log-likelihoods.

    Returns (LL, i_hat) where i_hat is the most likely hypothesis (ties break
    to the smallest index) and LL = loglik(i_hat) - max over the others.
    """
    if state.n_hypotheses < 2:
        raise ValueError("log-likelihood index needs at least 2 hypotheses")
    i_hat = int(np.argmax(state.loglik))
    rest = np.delete(state.loglik, i_hat)
    return float(state.loglik[i_hat] - rest.max()), i_hat


def map_decode(state: BeliefState) -> int:
    """Most probable hypothesis under the current belief (ties break low)."""
    return int(np.argmax(state.rho))
