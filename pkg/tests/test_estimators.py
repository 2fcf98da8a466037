import math

import numpy as np
import pytest

from lrpac import Policy, ReturnSpec
from lrpac.estimators import (
    EstimationError,
    SampleSet,
    crude_estimate,
    eta_bound,
    is_estimate,
    is_expectation_exact,
    is_variance_exact,
    likelihood_ratio,
    mixture_expectation_exact,
    mixture_is_estimate,
    optimal_sampling_check,
    sample_set,
    weights,
    wis_estimate,
)
from lrpac.experiments import default_model
from lrpac.model import History, enumerate_histories, exact_value, history_table

from conftest import mc_sample, random_policy


def one_step_set(obs, acts, rets, bprobs):
    spec = ReturnSpec("finite_horizon", 1, 10.0)
    return SampleSet(np.array(obs)[:, None], np.array(acts)[:, None], np.array(rets, float)[:, None], np.array(bprobs)[:, None], spec)


class TestCrude:
    def test_examples(self):
        assert crude_estimate([1, 0, 1, 0]).value == 0.5
        e = crude_estimate([2.0])
        assert e.value == 2.0 and e.std_error == 0.0 and e.n_samples == 1

    def test_std_error(self):
        x = np.arange(10.0)
        assert crude_estimate(x).std_error == pytest.approx(np.std(x, ddof=1) / math.sqrt(10))

    def test_empty(self):
        with pytest.raises(EstimationError):
            crude_estimate([])


class TestLikelihoodRatio:
    def test_same_policy(self, model, spec, target):
        for h, _, _ in enumerate_histories(model, spec, target)[:50]:
            h = History(h.observations, h.actions, h.rewards, behavior_probs=target.probs[h.observations, h.actions])
            assert likelihood_ratio(target, h) == pytest.approx(1.0, abs=1e-14)

    def test_two_step(self, model):
        spec = ReturnSpec("finite_horizon", 2, 1.0)
        t = Policy.tabular([[0.8, 0.2], [0.8, 0.2]])
        h = History(np.array([0, 1]), np.array([0, 0]), np.zeros(2), behavior_probs=np.array([0.5, 0.5]))
        assert likelihood_ratio(t, h) == pytest.approx(2.56, abs=1e-12)
        # full-probability ratio through enumeration agrees
        tab = history_table(model, spec)
        u = Policy.uniform(2, 2)
        sel = (tab.observations == [0, 1]).all(1) & (tab.actions == [0, 0]).all(1)
        ratio = tab.prob(t)[sel] / tab.prob(u)[sel]
        assert np.allclose(ratio, 2.56, rtol=1e-12)

    def test_zero_target(self):
        t = Policy.tabular([[1.0, 0.0]])
        h = History(np.array([0]), np.array([1]), np.zeros(1), behavior_probs=np.array([0.5]))
        assert likelihood_ratio(t, h) == 0.0

    def test_missing_behavior(self):
        with pytest.raises(EstimationError):
            likelihood_ratio(Policy.uniform(2, 2), History(np.array([0]), np.array([0]), np.zeros(1)))


class TestIS:
    def test_target_is_behavior(self, model, spec, target):
        ss = sample_set(model, target, spec, 500, 3)
        assert is_estimate(ss, target).value == pytest.approx(crude_estimate(ss.returns).value, rel=1e-13)
        assert np.allclose(weights(ss, target), 1.0)

    def test_unbiased_by_enumeration(self, model, spec):
        rng = np.random.default_rng(11)
        for _ in range(5):
            t, b = random_policy(rng), random_policy(rng)
            assert is_expectation_exact(model, t, b, spec) == pytest.approx(exact_value(model, t, spec), abs=1e-10)

    def test_zero_returns(self, model, target, uniform):
        spec = ReturnSpec("finite_horizon", 4, 1.0)
        ss = sample_set(model, uniform, spec, 50, 1)
        ss = SampleSet(ss.observations, ss.actions, np.zeros_like(ss.rewards), ss.behavior_probs, spec)
        assert is_estimate(ss, target).value == 0.0

    def test_one_step_example(self):
        t = Policy.tabular([[0.9, 0.1]])
        ss = one_step_set([0, 0], [0, 1], [1.0, 1.0], [0.5, 0.5])
        assert is_estimate(ss, t).value == pytest.approx((1.8 + 0.2) / 2)

    def test_weight_summary(self):
        t = Policy.tabular([[0.9, 0.1]])
        e = is_estimate(one_step_set([0, 0], [0, 1], [1.0, 1.0], [0.5, 0.5]), t)
        assert (e.weight_min, e.weight_max) == pytest.approx((0.2, 1.8))
        assert e.weight_mean == pytest.approx(1.0)


class TestVariance:
    def test_forms_agree(self, model, spec):
        rng = np.random.default_rng(2)
        for _ in range(5):
            t, b = random_policy(rng), random_policy(rng)
            l1 = is_variance_exact(model, t, b, spec, 7, "line1")
            l2 = is_variance_exact(model, t, b, spec, 7, "line2")
            l3 = is_variance_exact(model, t, b, spec, 7, "line3")
            assert l1 == pytest.approx(l3, abs=1e-10) and l2 == pytest.approx(l3, abs=1e-10)

    def test_target_is_behavior(self, model, spec, target):
        tab = history_table(model, spec)
        p = tab.prob(target)
        V = np.sum(p * tab.returns)
        crude = np.sum(p * (tab.returns - V) ** 2) / 10
        assert is_variance_exact(model, target, target, spec, 10) == pytest.approx(crude, abs=1e-12)

    def test_deterministic(self):
        m = default_model()
        m.reward[:] = 0.5
        spec = ReturnSpec("finite_horizon", 3, 1.0)
        p = Policy.tabular([[1.0, 0.0], [1.0, 0.0]])
        assert is_variance_exact(m, p, p, spec, 5) == pytest.approx(0.0, abs=1e-14)

    def test_replicated(self, model, spec, target, uniform):
        N, M = 20, 4000
        ss = sample_set(model, uniform, spec, N * M, 99)
        est = (ss.returns * weights(ss, target)).reshape(M, N).mean(axis=1)
        exact = is_variance_exact(model, target, uniform, spec, N)
        # variance of a sample variance is loose here; use a generous band
        assert np.var(est, ddof=1) == pytest.approx(exact, rel=0.1)

    def test_bad_form(self, model, spec, target):
        with pytest.raises(ValueError):
            is_variance_exact(model, target, target, spec, 1, "line4")


class TestWIS:
    def test_example(self):
        t = Policy.tabular([[0.9, 0.1]])
        e = wis_estimate(one_step_set([0, 0], [0, 1], [1.0, 0.0], [0.5, 0.5]), t)
        assert e.value == pytest.approx(0.9)

    def test_scale_invariance(self, model, spec, target, uniform):
        ss = sample_set(model, uniform, spec, 200, 5)
        scaled = SampleSet(ss.observations, ss.actions, ss.rewards, ss.behavior_probs * 0.5, spec)
        assert wis_estimate(scaled, target).value == pytest.approx(wis_estimate(ss, target).value, rel=1e-13)

    def test_all_zero_weights(self):
        t = Policy.tabular([[1.0, 0.0]])
        with pytest.raises(EstimationError):
            wis_estimate(one_step_set([0], [1], [1.0], [0.5]), t)

    def test_consistent(self, model, spec, target, uniform):
        V = exact_value(model, target, spec)
        errs = []
        for n in (100, 10_000, 1_000_000):
            ss = mc_sample(model, uniform, spec, n, np.random.default_rng(n))
            errs.append(abs(wis_estimate(ss, target).value - V))
        assert errs[-1] < 0.01


class TestMixture:
    def test_single_component_is_is(self, model, spec, target, uniform):
        ss = sample_set(model, uniform, spec, 300, 8)
        a = mixture_is_estimate([(ss, 1.0, uniform)], target)
        assert a.value == pytest.approx(is_estimate(ss, target).value, rel=1e-13)

    def test_identical_behaviors(self, model, spec, target, uniform):
        s1 = sample_set(model, uniform, spec, 100, 1)
        s2 = sample_set(model, uniform, spec, 100, 2)
        a = mixture_is_estimate([(s1, 0.5, uniform), (s2, 0.5, uniform)], target)
        joint = np.concatenate([s1.returns * weights(s1, target), s2.returns * weights(s2, target)]).mean()
        assert a.value == pytest.approx(joint, rel=1e-13)

    def test_exact_expectation_disjoint_supports(self, model, spec, target):
        b1 = Policy.tabular([[1.0, 0.0], [0.5, 0.5]])
        b2 = Policy.tabular([[0.3, 0.7], [0.6, 0.4]])
        for priors in ([0.5, 0.5], [0.2, 0.8], [0.9, 0.1]):
            val = mixture_expectation_exact(model, target, [b1, b2], priors, spec)
            assert val == pytest.approx(exact_value(model, target, spec), abs=1e-10)

    def test_mc_unbiased(self, model, spec, target):
        b1 = Policy.tabular([[0.8, 0.2], [0.2, 0.8]])
        b2 = Policy.uniform(2, 2)
        s1 = sample_set(model, b1, spec, 30_000, 1)
        s2 = sample_set(model, b2, spec, 90_000, 2)
        e = mixture_is_estimate([(s1, 0.25, b1), (s2, 0.75, b2)], target)
        assert abs(e.value - exact_value(model, target, spec)) < 4 * e.std_error

    def test_bad_priors(self, model, spec, uniform, target):
        ss = sample_set(model, uniform, spec, 10, 1)
        with pytest.raises(EstimationError):
            mixture_is_estimate([(ss, 0.7, uniform)], target)


class TestEta:
    def test_examples(self):
        assert eta_bound(3, 0.0) == 8
        assert eta_bound(2, 0.25) == 2.25
        assert eta_bound(5, 0.5) == 1

    def test_bad_floor(self):
        with pytest.raises(EstimationError):
            eta_bound(2, 0.6)


class TestOptimalSampling:
    def test_pointwise(self, target):
        m = default_model(positive_rewards=True)
        spec = ReturnSpec("finite_horizon", 4, 1.0)
        res = optimal_sampling_check(m, target, spec)
        assert np.all(np.abs(res.reweighted - res.value) <= 1e-9)
        assert res.variance == pytest.approx(0.0, abs=1e-18)
        assert res.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_constant_reward(self, target):
        m = default_model()
        m.reward[:] = 0.5
        spec = ReturnSpec("finite_horizon", 2, 1.0)
        res = optimal_sampling_check(m, target, spec)
        assert res.value == pytest.approx(1.0)
        assert np.allclose(res.probs, res.histories.prob(target))

    def test_zero_return_gets_zero_mass(self, target):
        m = default_model()
        spec = ReturnSpec("finite_horizon", 1, 1.0)
        res = optimal_sampling_check(m, target, spec)
        zero = res.histories.returns == 0
        assert zero.any() and np.all(res.probs[zero] == 0)

    def test_signed_returns(self, target):
        m = default_model()
        m.reward[0, 0] = -0.5
        with pytest.raises(EstimationError):
            optimal_sampling_check(m, target, ReturnSpec("finite_horizon", 2, 1.0))
