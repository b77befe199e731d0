"""Collection and advantage estimation against brute-force oracles."""

import numpy as np
import pytest

from poemrl import policy as pol
from poemrl.envs import ContinuousSpace, StepResult
from poemrl.rollout import RolloutBatch, collect, compute_gae

from conftest import make_gaussian_ac


class OneStepEnv:
    """Terminates on every step with reward 1."""

    observation_dim = 2
    action_space = ContinuousSpace(1, -1.0, 1.0)
    max_episode_steps = 10

    def __init__(self):
        self.resets = 0

    def reset(self, seed=None):
        self.resets += 1
        return np.array([0.1, 0.2])

    def step(self, action):
        return StepResult(np.array([0.0, 0.0]), 1.0, True, False, {})


class DriftEnv:
    """Never terminates; observation drifts deterministically."""

    observation_dim = 2
    action_space = ContinuousSpace(1, -1.0, 1.0)
    max_episode_steps = 1000

    def __init__(self):
        self.t = 0

    def reset(self, seed=None):
        self.t = 0
        return np.array([0.0, 0.0])

    def step(self, action):
        self.t += 1
        return StepResult(np.array([self.t * 0.01, -self.t * 0.01]), 0.5, False, False, {})


def batch_from(rewards, values, terminated=None, truncated=None, bootstrap=0.0, next_values=None):
    n = len(rewards)
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    terminated = np.zeros(n, bool) if terminated is None else np.asarray(terminated, bool)
    truncated = np.zeros(n, bool) if truncated is None else np.asarray(truncated, bool)
    if next_values is None:
        next_values = np.zeros(n)
        for t in range(n - 1):
            if not (terminated[t] or truncated[t]):
                next_values[t] = values[t + 1]
        if not (terminated[-1] or truncated[-1]):
            next_values[-1] = bootstrap
    return RolloutBatch(
        obs=np.zeros((n, 2)),
        actions=np.zeros((n, 1)),
        log_probs_old=np.zeros(n),
        rewards=rewards,
        values_old=values,
        terminated=terminated,
        truncated=truncated,
        next_values=np.asarray(next_values, dtype=np.float64),
        bootstrap_value=bootstrap,
    )


class TestCollect:
    def test_single_step_records_value(self):
        ac = make_gaussian_ac(seed=1)
        env = OneStepEnv()
        batch, _ = collect(env, ac, 1, np.random.default_rng(0))
        assert len(batch) == 1
        assert batch.values_old[0] == pol.value(ac, batch.obs[0])

    def test_replay_identical(self):
        ac = make_gaussian_ac(seed=2)
        b1, _ = collect(DriftEnv(), ac, 16, np.random.default_rng(5), DriftEnv().reset())
        b2, _ = collect(DriftEnv(), ac, 16, np.random.default_rng(5), DriftEnv().reset())
        assert np.array_equal(b1.actions, b2.actions)
        assert np.array_equal(b1.obs, b2.obs)
        assert np.array_equal(b1.log_probs_old, b2.log_probs_old)

    def test_terminating_env_sets_flags_and_resets(self):
        ac = make_gaussian_ac(seed=3)
        env = OneStepEnv()
        batch, _ = collect(env, ac, 5, np.random.default_rng(1))
        assert batch.terminated.all()
        assert env.resets == 6  # initial + one per episode
        assert np.array_equal(batch.next_values, np.zeros(5))

    def test_n_steps_validated(self):
        with pytest.raises(ValueError):
            collect(OneStepEnv(), make_gaussian_ac(), 0, np.random.default_rng(0))

    def test_stored_log_probs_match_policy(self):
        ac = make_gaussian_ac(seed=4)
        batch, _ = collect(DriftEnv(), ac, 8, np.random.default_rng(2), DriftEnv().reset())
        for i in range(8):
            dist = pol.distribution(ac, batch.obs[i])
            assert abs(batch.log_probs_old[i] - pol.log_prob(dist, batch.actions[i])) < 1e-12


class TestComputeGae:
    def test_single_terminated_step(self):
        batch = compute_gae(batch_from([1.0], [0.5], terminated=[True]), 0.99, 0.95, normalize=False)
        assert batch.advantages_raw[0] == 0.5
        assert batch.returns[0] == 1.0

    def test_gamma_zero_collapses_to_reward_minus_value(self, rng):
        rewards = rng.normal(size=7)
        values = rng.normal(size=7)
        batch = compute_gae(batch_from(rewards, values, bootstrap=2.0), 0.0, 0.7, normalize=False)
        assert np.allclose(batch.advantages_raw, rewards - values, atol=1e-15)

    def test_lambda_one_equals_discounted_monte_carlo(self, rng):
        # independent oracle: full discounted return minus the value baseline
        gamma = 0.99
        rewards = rng.normal(size=5)
        values = rng.normal(size=5)
        terminated = [False, False, False, False, True]
        batch = compute_gae(batch_from(rewards, values, terminated), gamma, 1.0, normalize=False)
        for t in range(5):
            mc = sum(gamma ** (k - t) * rewards[k] for k in range(t, 5))
            assert abs(batch.advantages_raw[t] - (mc - values[t])) < 1e-12

    def test_lambda_zero_is_one_step_td(self, rng):
        gamma = 0.9
        rewards = rng.normal(size=6)
        values = rng.normal(size=6)
        batch = compute_gae(batch_from(rewards, values, bootstrap=0.3), gamma, 0.0, normalize=False)
        next_values = np.append(values[1:], 0.3)
        td = rewards + gamma * next_values - values
        assert np.allclose(batch.advantages_raw, td, atol=1e-15)

    def test_recursion_equals_explicit_double_sum(self, rng):
        # oracle: A_t = sum_l (gamma*lam)^l delta_{t+l} within one episode
        for trial in range(20):
            n = int(rng.integers(1, 11))
            gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.0, 1.0)
            rewards = rng.normal(size=n)
            values = rng.normal(size=n)
            terminated = np.zeros(n, bool)
            terminated[-1] = True
            batch = compute_gae(batch_from(rewards, values, terminated), gamma, lam, normalize=False)

            next_values = np.append(values[1:], 0.0)
            next_values[-1] = 0.0
            delta = rewards + gamma * next_values * (1 - terminated) - values
            for t in range(n):
                explicit = sum((gamma * lam) ** (l - t) * delta[l] for l in range(t, n))
                assert abs(batch.advantages_raw[t] - explicit) <= 1e-12

    def test_returns_equal_advantages_plus_values_exactly(self, rng):
        rewards = rng.normal(size=32)
        values = rng.normal(size=32)
        terminated = rng.random(32) < 0.2
        batch = compute_gae(batch_from(rewards, values, terminated, bootstrap=0.7), 0.99, 0.95)
        assert np.array_equal(batch.returns, batch.advantages_raw + batch.values_old)

    def test_truncation_bootstraps_but_cuts_accumulation(self):
        # truncated mid-batch: delta uses the stored next value, the
        # advantage recursion restarts after the cut
        rewards = [1.0, 1.0, 1.0]
        values = [0.0, 0.0, 0.0]
        truncated = [False, True, False]
        next_values = [0.0, 5.0, 2.0]  # V(s1), V(s_truncated_final), bootstrap
        batch = compute_gae(
            batch_from(rewards, values, truncated=truncated, next_values=next_values, bootstrap=2.0),
            1.0, 1.0, normalize=False,
        )
        assert batch.advantages_raw[2] == 1.0 + 2.0  # r + bootstrap
        assert batch.advantages_raw[1] == 1.0 + 5.0  # r + V(final state), no tail
        assert batch.advantages_raw[0] == 1.0 + 0.0 + batch.advantages_raw[1]

    def test_normalization_moments(self, rng):
        rewards = rng.normal(size=256)
        values = rng.normal(size=256)
        batch = compute_gae(batch_from(rewards, values, bootstrap=0.0), 0.99, 0.95)
        assert abs(batch.advantages.mean()) <= 1e-10
        assert abs(batch.advantages.std() - 1.0) <= 1e-6

    def test_range_validation(self):
        b = batch_from([1.0], [0.0])
        with pytest.raises(ValueError):
            compute_gae(b, 1.0001, 0.95)
        with pytest.raises(ValueError):
            compute_gae(b, 0.99, -0.1)

    def test_minibatch_requires_gae(self):
        b = batch_from([1.0, 2.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            b.minibatch(np.array([0]))

    def test_transitions_view(self):
        b = compute_gae(batch_from([1.0, 2.0], [0.2, 0.3], terminated=[False, True]), 0.9, 0.9)
        ts = b.transitions()
        assert len(ts) == 2
        assert ts[1].reward == 2.0 and ts[1].terminated and not ts[1].truncated
