import numpy as np
import pytest

from asht.belief import (
    confidence,
    error_probability,
    initial_belief,
    log_likelihood_index,
    map_decode,
    update_belief,
)
from asht.engine import (
    BatchBeliefTracker,
    ChernoffAgent,
    EpisodeBatch,
    RandomAgent,
    categorical_rows,
    episode_uniform_matrix,
    first_crossing_times,
    sequential_decisions,
    simulate,
)
from asht.env import build_bernoulli_env, two_sensor_pair

PAIR = two_sensor_pair()


class TestCategoricalRows:
    def test_uniform_boundaries(self):
        p = np.tile([0.25, 0.25, 0.25, 0.25], (5, 1))
        u = np.array([0.0, 0.24, 0.25, 0.74, 0.999])
        np.testing.assert_array_equal(categorical_rows(p, u), [0, 0, 1, 2, 3])

    def test_point_mass(self):
        p = np.tile([0.0, 1.0, 0.0], (3, 1))
        u = np.array([0.0, 0.5, 0.99])
        np.testing.assert_array_equal(categorical_rows(p, u), [1, 1, 1])

    def test_row_specific_distributions(self):
        p = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_array_equal(categorical_rows(p, np.array([0.7, 0.7])), [0, 1])

    def test_empirical_frequencies(self):
        rng = np.random.default_rng(0)
        probs = np.array([0.1, 0.6, 0.3])
        p = np.tile(probs, (50_000, 1))
        draws = categorical_rows(p, rng.random(50_000))
        freq = np.bincount(draws, minlength=3) / 50_000
        np.testing.assert_allclose(freq, probs, atol=0.01)


class TestEpisodeUniformMatrix:
    def test_matches_per_episode_streams(self):
        out = episode_uniform_matrix(99, np.array([0, 5, 6]), horizon=4)
        assert out.shape == (3, 13)
        for row, idx in zip(out, (0, 5, 6)):
            rng = np.random.default_rng(np.random.SeedSequence((99, idx)))
            np.testing.assert_array_equal(row, rng.random(13))

    def test_distinct_episodes_differ(self):
        out = episode_uniform_matrix(99, np.array([0, 1]), horizon=4)
        assert not np.array_equal(out[0], out[1])


class TestBatchBeliefTracker:
    def test_matches_scalar_updates(self):
        rng = np.random.default_rng(4)
        model = PAIR.train
        n = 16
        tracker = BatchBeliefTracker(model, PAIR.prior, n)
        states = [initial_belief(PAIR.prior) for _ in range(n)]
        for _ in range(30):
            actions = rng.integers(model.n_actions, size=n)
            obs = rng.integers(model.n_observations, size=n)
            tracker.update(actions, obs)
            states = [
                update_belief(s, int(a), int(y), model)
                for s, a, y in zip(states, actions, obs)
            ]
            for i, s in enumerate(states):
                np.testing.assert_allclose(tracker.rho[i], s.rho, atol=1e-9)
                np.testing.assert_allclose(tracker.loglik[i], s.loglik, atol=1e-9)
                assert tracker.gamma()[i] == pytest.approx(error_probability(s))
                ll, i_hat = log_likelihood_index(s)
                assert tracker.ll_gap()[i] == pytest.approx(ll, abs=1e-9)
                assert tracker.ml_index()[i] == i_hat
                # The two paths normalize rho differently, so analytically
                # tied posteriors may round to either side; only insist on the
                # same argmax when the top two entries are clearly separated.
                top2 = np.partition(s.rho, -2)[-2:]
                if top2[1] - top2[0] > 1e-9:
                    assert tracker.map_index()[i] == map_decode(s)

    def test_impossible_observation_raises(self):
        det = build_bernoulli_env([[1.0, 1.0]])
        tracker = BatchBeliefTracker(det, [0.5, 0.5], 2)
        with pytest.raises(ValueError):
            tracker.update(np.zeros(2, dtype=int), np.zeros(2, dtype=int))


class TestSimulate:
    def test_replay_is_identical(self):
        a = simulate(PAIR.test, PAIR.prior, RandomAgent(), 50, 12, master_seed=7)
        b = simulate(PAIR.test, PAIR.prior, RandomAgent(), 50, 12, master_seed=7)
        np.testing.assert_array_equal(a.actions, b.actions)
        np.testing.assert_array_equal(a.observations, b.observations)
        np.testing.assert_array_equal(a.hypotheses, b.hypotheses)
        np.testing.assert_array_equal(a.gamma, b.gamma)

    def test_split_equals_single_call(self):
        agent = ChernoffAgent(PAIR.test, PAIR.prior)
        whole = simulate(PAIR.test, PAIR.prior, agent, 100, 8, master_seed=13)
        first = simulate(PAIR.test, PAIR.prior, agent, 37, 8, master_seed=13)
        rest = simulate(
            PAIR.test, PAIR.prior, agent, 63, 8, master_seed=13, episode_offset=37
        )
        np.testing.assert_array_equal(
            whole.actions, np.vstack([first.actions, rest.actions])
        )
        np.testing.assert_array_equal(
            whole.observations, np.vstack([first.observations, rest.observations])
        )
        np.testing.assert_array_equal(
            whole.hypotheses, np.concatenate([first.hypotheses, rest.hypotheses])
        )
        np.testing.assert_array_equal(whole.ll, np.vstack([first.ll, rest.ll]))

    def test_hypotheses_follow_prior(self):
        prior = np.array([0.7, 0.1, 0.1, 0.1])
        b = simulate(PAIR.train, prior, RandomAgent(), 20_000, 1, master_seed=3)
        freq = np.bincount(b.hypotheses, minlength=4) / 20_000
        np.testing.assert_allclose(freq, prior, atol=0.01)

    def test_traces_match_scalar_replay(self):
        b = simulate(PAIR.test, PAIR.prior, ChernoffAgent(PAIR.test, PAIR.prior),
                     5, 15, master_seed=21)
        for i in range(5):
            state = initial_belief(PAIR.prior)
            assert b.gamma[i, 0] == pytest.approx(error_probability(state))
            for t in range(15):
                state = update_belief(
                    state, int(b.actions[i, t]), int(b.observations[i, t]), PAIR.test
                )
                assert b.gamma[i, t + 1] == pytest.approx(error_probability(state), abs=1e-9)
                ll, i_hat = log_likelihood_index(state)
                assert b.ll[i, t + 1] == pytest.approx(ll, abs=1e-9)
                assert b.ml_idx[i, t + 1] == i_hat
                top2 = np.partition(state.rho, -2)[-2:]
                if top2[1] - top2[0] > 1e-9:
                    assert b.map_idx[i, t + 1] == map_decode(state)

    def test_observation_frequencies(self):
        # Under hypothesis 3 of the training model both sensors fire with
        # probability 0.8.
        prior = np.array([0.0, 0.0, 0.0, 1.0])
        b = simulate(PAIR.train, prior, RandomAgent(), 5000, 4, master_seed=9)
        assert abs(b.observations.mean() - 0.8) < 0.01


class TestAgents:
    def test_random_agent_is_uniform(self):
        b = simulate(PAIR.train, PAIR.prior, RandomAgent(), 4000, 5, master_seed=31)
        freq = np.mean(b.actions == 0)
        assert abs(freq - 0.5) < 4.0 * np.sqrt(0.25 / (4000 * 5))

    def test_random_agent_ignores_belief(self):
        ctx_actions = (np.linspace(0.0, 0.999, 10) * 2).astype(np.int64)
        b = simulate(PAIR.train, PAIR.prior, RandomAgent(), 10, 1, master_seed=1)
        assert set(np.unique(b.actions)) <= {0, 1}
        assert ctx_actions.shape == (10,)

    def test_chernoff_agent_exploits_informative_sensor(self):
        model = build_bernoulli_env({"A": [0.5, 0.5], "B": [0.2, 0.8]})
        agent = ChernoffAgent(model, [0.5, 0.5], schedule=lambda t: 0.0)
        b = simulate(model, [0.5, 0.5], agent, 200, 6, master_seed=17)
        assert np.all(b.actions == 1)

    def test_chernoff_agent_matches_scalar_distributions(self):
        # The vectorized agent must use the same per-leader maximin tables as
        # the scalar module.
        from asht.chernoff import kl_matrix, maximin_action_distribution

        agent = ChernoffAgent(PAIR.test, PAIR.prior)
        for i_hat in range(4):
            expected = maximin_action_distribution(kl_matrix(PAIR.test, i_hat)).g
            np.testing.assert_allclose(agent.g[i_hat], expected, atol=1e-12)


class TestFirstCrossing:
    def test_hand_example(self):
        ll = np.array([[0.0, 0.5, 2.0, 3.0], [0.0, 0.0, 0.0, 0.0]])
        np.testing.assert_array_equal(first_crossing_times(ll, 1.0), [2, 3])

    def test_strict_inequality(self):
        ll = np.array([[0.0, 1.0, 1.5]])
        np.testing.assert_array_equal(first_crossing_times(ll, 1.0), [2])

    def test_prior_column_never_stops(self):
        ll = np.array([[5.0, 0.0, 6.0]])
        np.testing.assert_array_equal(first_crossing_times(ll, 1.0), [2])


class TestSequentialDecisions:
    @staticmethod
    def toy_batch():
        ll = np.array([[0.0, 2.0, 2.5], [0.0, 0.5, 0.9]])
        ml = np.array([[0, 1, 1], [0, 2, 3]])
        n, T = 2, 2
        return EpisodeBatch(
            hypotheses=np.array([1, 3]),
            actions=np.zeros((n, T), dtype=np.int16),
            observations=np.zeros((n, T), dtype=np.int16),
            gamma=np.zeros((n, T + 1)),
            ll=ll,
            ml_idx=ml,
            map_idx=ml,
        )

    def test_stop_time_and_decision(self):
        ts, dec = sequential_decisions(self.toy_batch(), c=np.exp(-1.0))
        np.testing.assert_array_equal(ts, [1, 2])  # thresholds: 1.0
        np.testing.assert_array_equal(dec, [1, 3])

    def test_invalid_tolerance(self):
        with pytest.raises(ValueError):
            sequential_decisions(self.toy_batch(), c=1.5)

    def test_error_bounded_by_tolerance_on_two_sensor_pair(self):
        # The log-likelihood stopping rule keeps the empirical error below c
        # for every tested tolerance.
        agent = ChernoffAgent(PAIR.test, PAIR.prior)
        b = simulate(PAIR.test, PAIR.prior, agent, 10_000, 120, master_seed=77)
        for c in (0.3, 0.2, 0.1, 0.05):
            _, dec = sequential_decisions(b, c)
            err = np.mean(dec != b.hypotheses)
            assert err <= c
