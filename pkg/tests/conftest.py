import numpy as np
import pytest

from lrpac import Policy, ReturnSpec
from lrpac.estimators import SampleSet
from lrpac.experiments import default_class, default_model, default_spec, default_target


@pytest.fixture
def model():
    return default_model()


@pytest.fixture
def spec():
    return default_spec()


@pytest.fixture
def target():
    return default_target()


@pytest.fixture
def uniform():
    return Policy.uniform(2, 2)


@pytest.fixture
def grid8():
    return default_class()


def random_policy(rng, floor=0.1, n_obs=2, n_act=2):
    """Reactive policy with every entry >= floor."""
    raw = rng.dirichlet(np.ones(n_act), size=n_obs)
    return Policy.tabular((1 - n_act * floor) * raw + floor, floor=floor)


def mc_sample(model, policy, spec, n, rng):
    """Independent vectorized sampler for Monte Carlo oracles (reactive policies only)."""
    T = spec.horizon

    def draw(p):
        c = np.cumsum(p, axis=-1)
        return np.minimum((rng.random(len(p))[:, None] >= c).sum(axis=1), p.shape[-1] - 1)

    s = draw(np.broadcast_to(model.initial_dist, (n, model.num_states)))
    obs = np.empty((n, T), int)
    act = np.empty((n, T), int)
    rew = np.empty((n, T))
    bp = np.empty((n, T))
    for t in range(T):
        o = draw(model.observation_fn[s])
        a = draw(policy.probs[o])
        obs[:, t], act[:, t], rew[:, t], bp[:, t] = o, a, model.reward[s, a], policy.probs[o, a]
        s = draw(model.transition[s, a])
    return SampleSet(obs, act, rew, bp, spec)
