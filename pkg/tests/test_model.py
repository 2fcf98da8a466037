import math
import warnings

import numpy as np
import pytest

from lrpac import (
    History,
    Policy,
    Pomdp,
    ReturnSpec,
    compute_return,
    enumerate_histories,
    exact_value,
    simulate_history,
    truncation_horizon,
    validate_pomdp,
)
from lrpac.estimators import sample_set
from lrpac.model import EnumerationCapError, ModelError, history_table

from conftest import mc_sample, random_policy


def two_state(rows=((0.5, 0.5), (0.5, 0.5)), reward=1.0, r_max=4.0):
    return Pomdp(
        initial_dist=[0.5, 0.5],
        transition=[[rows[0], rows[0]], [rows[1], rows[1]]],
        observation_fn=[[1.0, 0.0], [0.0, 1.0]],
        reward=[[reward, reward], [reward, reward]],
        r_max=r_max,
    )


def deterministic_model():
    return Pomdp(
        initial_dist=[1.0, 0.0],
        transition=[[[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]],
        observation_fn=[[1.0, 0.0], [0.0, 1.0]],
        reward=[[1.0, 0.0], [0.5, 0.25]],
        r_max=1.0,
    )


class TestValidate:
    def test_valid(self):
        validate_pomdp(two_state())

    def test_row_sum(self):
        with pytest.raises(ModelError, match="row sum 1.2"):
            validate_pomdp(two_state(rows=((0.6, 0.6), (0.5, 0.5))))

    def test_reward_bound(self):
        with pytest.raises(ModelError, match="exceeds r_max"):
            validate_pomdp(two_state(reward=5.0, r_max=4.0))

    def test_negative_entry(self):
        m = two_state()
        m.observation_fn = np.array([[1.5, -0.5], [0.0, 1.0]])
        with pytest.raises(ModelError, match="negative"):
            validate_pomdp(m)

    def test_shape(self):
        m = two_state()
        m.transition = np.ones((2, 2, 3)) / 3
        with pytest.raises(ModelError, match="transition"):
            validate_pomdp(m)


class TestReturns:
    @pytest.mark.parametrize(
        "rewards,spec,expected",
        [
            ([1, 1, 1], ReturnSpec("finite_horizon", 3, 1.0), 3.0),
            ([0, 0, 0], ReturnSpec("finite_horizon", 3, 1.0), 0.0),
            ([1, 1, 1, 1], ReturnSpec("discounted", 4, 1.0, 0.5), 1.875),
        ],
    )
    def test_examples(self, rewards, spec, expected):
        h = History(np.zeros(len(rewards), int), np.zeros(len(rewards), int), np.array(rewards, float))
        assert compute_return(h, spec) == expected

    def test_short_history(self):
        h = History(np.zeros(2, int), np.zeros(2, int), np.ones(2))
        with pytest.raises(ModelError):
            compute_return(h, ReturnSpec("finite_horizon", 3, 1.0))

    def test_r_max(self):
        assert ReturnSpec("finite_horizon", 5, 2.0).big_r_max == 10.0
        assert ReturnSpec("discounted", 5, 1.0, 0.9).big_r_max == pytest.approx(10.0)


class TestTruncation:
    def test_examples(self):
        assert truncation_horizon(0.5, 1 / 8, 0.5) == 3
        assert truncation_horizon(0.9, 0.1, 1.0) == 44

    def test_tail_oracle(self):
        # partial-sum tail: 10*0.9**T is the tail of sum 0.9**t from T on
        T = truncation_horizon(0.9, 0.1, 1.0)
        tail = lambda k: sum(0.9**t for t in range(k, 2000))
        assert tail(T) <= 0.1 + 1e-12 and tail(T - 1) > 0.1

    def test_boundary(self):
        with pytest.warns(RuntimeWarning):
            assert truncation_horizon(0.5, 1.0, 0.5) == 0

    @pytest.mark.parametrize("gamma,eps", [(0.5, 0.01), (0.9, 0.3), (0.99, 0.05)])
    def test_truncated_constant_reward_within_eps(self, gamma, eps):
        r = 1.0
        T = truncation_horizon(gamma, eps, r)
        spec = ReturnSpec("discounted", T, r, gamma)
        m = two_state(reward=r, r_max=r)
        full = r / (1 - gamma)
        assert abs(full - exact_value_mc_free(m, spec)) <= eps

    def test_minimal(self):
        for gamma in (0.3, 0.5, 0.8, 0.95):
            for eps in (0.5, 0.1, 0.01):
                T = truncation_horizon(gamma, eps, 1.0)
                big = 1 / (1 - gamma)
                if T:
                    assert gamma**T * big <= eps < gamma ** (T - 1) * big


def exact_value_mc_free(m, spec):
    # constant reward: every history has the same return
    T = spec.horizon
    return float(sum(spec.gamma**t for t in range(T)) * m.reward[0, 0])


class TestSimulate:
    def test_deterministic_model(self):
        m = deterministic_model()
        pol = Policy.tabular([[1.0, 0.0], [0.0, 1.0]])
        spec = ReturnSpec("finite_horizon", 4, 1.0)
        for seed in (0, 1, 2**63):
            h = simulate_history(m, pol, spec, seed)
            # s0 -a0-> s1 -a1-> s1 -a1-> s1
            assert h.state_trace.tolist() == [0, 1, 1, 1]
            assert h.actions.tolist() == [0, 1, 1, 1]
            assert h.rewards.tolist() == [1.0, 0.25, 0.25, 0.25]
            assert h.behavior_probs.tolist() == [1.0, 1.0, 1.0, 1.0]

    def test_same_seed(self, model, spec, target):
        a = simulate_history(model, target, spec, 12345)
        b = simulate_history(model, target, spec, 12345)
        assert a.steps == b.steps and a.state_trace.tolist() == b.state_trace.tolist()
        assert a.behavior_probs.tolist() == b.behavior_probs.tolist()

    def test_batch_matches_single(self, model, spec, target):
        ss = sample_set(model, target, spec, 20, 7)
        for i in range(20):
            h = simulate_history(model, target, spec, int(ss.seeds[i]))
            assert h.actions.tolist() == ss.actions[i].tolist()
            assert h.rewards.tolist() == ss.rewards[i].tolist()

    def test_dimension_mismatch(self, model, spec):
        with pytest.raises(ModelError):
            simulate_history(model, Policy.uniform(3, 2), spec, 0)

    def test_state_marginals(self):
        # forward propagation oracle
        m = Pomdp(
            initial_dist=[0.9, 0.1],
            transition=[[[0.7, 0.3]] * 2, [[0.3, 0.7]] * 2],
            observation_fn=[[0.5, 0.5], [0.5, 0.5]],
            reward=[[0.0, 0.0], [1.0, 1.0]],
            r_max=1.0,
        )
        spec = ReturnSpec("finite_horizon", 5, 1.0)
        n = 10**5
        ss = sample_set(m, Policy.uniform(2, 2), spec, n, 99)
        # reward is the indicator of state 1
        freq = ss.rewards.mean(axis=0)
        p = m.initial_dist.copy()
        P = m.transition[:, 0, :]
        for t in range(spec.horizon):
            se = math.sqrt(p[1] * (1 - p[1]) / n)
            assert abs(freq[t] - p[1]) <= 3 * se
            p = p @ P

    def test_returns_bounded(self, model, spec, target):
        ss = sample_set(model, target, spec, 500, 3)
        assert np.all(np.abs(ss.returns) <= spec.big_r_max)


class TestEnumerate:
    def test_deterministic_single_entry(self):
        m = deterministic_model()
        pol = Policy.tabular([[1.0, 0.0], [0.0, 1.0]])
        out = enumerate_histories(m, ReturnSpec("finite_horizon", 3, 1.0), pol)
        assert len(out) == 1
        h, pe, pa = out[0]
        assert pe * pa == 1.0

    def test_normalization_uniform(self):
        m = Pomdp([0.5, 0.5], np.full((2, 2, 2), 0.5), [[1.0], [1.0]], np.zeros((2, 2)), 0.0)
        out = enumerate_histories(m, ReturnSpec("finite_horizon", 2, 0.0), Policy.uniform(1, 2))
        assert len(out) == (2 * 1 * 2) ** 2
        assert sum(pe * pa for _, pe, pa in out) == pytest.approx(1.0, abs=1e-10)

    def test_normalization_random(self, model, spec):
        rng = np.random.default_rng(0)
        for _ in range(10):
            out = enumerate_histories(model, spec, random_policy(rng))
            assert abs(sum(pe * pa for _, pe, pa in out) - 1.0) <= 1e-10

    def test_matches_exact_value(self, model, spec, target):
        out = enumerate_histories(model, spec, target)
        v = sum(pe * pa * compute_return(h, spec) for h, pe, pa in out)
        assert v == pytest.approx(exact_value(model, target, spec), abs=1e-12)

    def test_returns_bounded(self, model, spec):
        t = history_table(model, spec)
        assert np.all(np.abs(t.returns) <= spec.big_r_max)

    def test_cap(self, model, spec, target):
        with pytest.raises(EnumerationCapError):
            exact_value(model, target, spec, cap=100)


class TestExactValue:
    def test_constant_reward(self):
        m = two_state(reward=0.75, r_max=1.0)
        for T in (1, 3, 5):
            assert exact_value(m, Policy.uniform(2, 2), ReturnSpec("finite_horizon", T, 1.0)) == pytest.approx(0.75 * T)

    def test_zero_reward(self):
        m = two_state(reward=0.0)
        assert exact_value(m, Policy.uniform(2, 2), ReturnSpec("finite_horizon", 3, 4.0)) == 0.0

    def test_monte_carlo(self, model, spec, target):
        rng = np.random.default_rng(2024)
        ss = mc_sample(model, target, spec, 10**6, rng)
        mean = ss.returns.mean()
        se = ss.returns.std(ddof=1) / math.sqrt(len(ss))
        assert abs(mean - exact_value(model, target, spec)) <= 4 * se
