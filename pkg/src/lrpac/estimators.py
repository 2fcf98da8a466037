"""Crude, importance-sampling, self-normalized and mixture value estimators.

Sample sets carry the behavior action probabilities recorded at simulation
time, so estimation never re-queries the behavior policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import (
    DEFAULT_ENUMERATION_CAP,
    History,
    ModelError,
    Pomdp,
    ReturnSpec,
    history_table,
    returns_of,
    simulate_batch,
)
from .policies import Policy, log_prob_actions
from .seeding import derive_seeds


class EstimationError(ValueError):
    pass


@dataclass(eq=False)
class SampleSet:
    observations: np.ndarray  # (N, T)
    actions: np.ndarray
    rewards: np.ndarray
    behavior_probs: np.ndarray
    spec: ReturnSpec
    behavior_policy_id: str = ""
    master_seed: Optional[int] = None
    seeds: Optional[np.ndarray] = None
    returns: np.ndarray = field(default=None)

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.behavior_probs = np.asarray(self.behavior_probs, dtype=float)
        if self.returns is None:
            self.returns = returns_of(self.rewards, self.spec)

    def __len__(self):
        return len(self.actions)

    def history(self, i: int) -> History:
        return History(
            observations=self.observations[i],
            actions=self.actions[i],
            rewards=self.rewards[i],
            behavior_probs=self.behavior_probs[i],
            seed=None if self.seeds is None else int(self.seeds[i]),
        )

    def log_behavior(self) -> np.ndarray:
        if np.any(self.behavior_probs <= 0):
            raise EstimationError("recorded behavior probability is zero")
        return np.log(self.behavior_probs).sum(axis=1)


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n_samples: int
    weight_min: float
    weight_max: float
    weight_mean: float
    estimator_kind: str


def sample_set(model: Pomdp, behavior: Policy, spec: ReturnSpec, n: int, master_seed: int) -> SampleSet:
    """Sampling stage: n histories, trajectory i seeded with mix_seed(master_seed, i)."""
    if n < 1:
        raise ModelError("n must be at least 1")
    seeds = derive_seeds(master_seed, n)
    b = simulate_batch(model, behavior, spec, seeds)
    return SampleSet(
        observations=b["observations"],
        actions=b["actions"],
        rewards=b["rewards"],
        behavior_probs=b["behavior_probs"],
        spec=spec,
        behavior_policy_id=behavior.name,
        master_seed=int(master_seed),
        seeds=b["seeds"],
    )


def _std_error(x: np.ndarray) -> float:
    if len(x) < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(len(x)))


def crude_estimate(returns: Sequence[float]) -> Estimate:
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        raise EstimationError("no returns")
    return Estimate(float(np.mean(r)), _std_error(r), len(r), 1.0, 1.0, 1.0, "crude")


def likelihood_ratio(target: Policy, h: History) -> float:
    """Pr(h_a|target) / prod of recorded behavior probabilities, formed in log space."""
    if h.behavior_probs is None:
        raise EstimationError("history has no recorded behavior probabilities")
    b = np.asarray(h.behavior_probs, dtype=float)
    if np.any(b <= 0):
        raise EstimationError("recorded behavior probability is zero")
    return math.exp(log_prob_actions(target, h) - float(np.log(b).sum()))


def weights(samples: SampleSet, target: Policy) -> np.ndarray:
    return np.exp(target.log_prob_batch(samples.observations, samples.actions) - samples.log_behavior())


def _weighted(terms, w, kind) -> Estimate:
    return Estimate(
        float(np.mean(terms)),
        _std_error(terms),
        len(terms),
        float(w.min()),
        float(w.max()),
        float(w.mean()),
        kind,
    )


def is_estimate(samples: SampleSet, target: Policy) -> Estimate:
    if len(samples) == 0:
        raise EstimationError("empty sample set")
    w = weights(samples, target)
    return _weighted(samples.returns * w, w, "is")


def wis_estimate(samples: SampleSet, target: Policy) -> Estimate:
    """sum(w R) / sum(w); std error by the delta method."""
    if len(samples) == 0:
        raise EstimationError("empty sample set")
    return _wis(samples.returns, weights(samples, target))


def _wis(returns, w) -> Estimate:
    total = w.sum()
    if not total > 0:
        raise EstimationError("all importance weights are zero")
    value = float(np.dot(w, returns) / total)
    se = float(math.sqrt(np.sum((w * (returns - value)) ** 2)) / total) if len(w) > 1 else 0.0
    return Estimate(value, se, len(w), float(w.min()), float(w.max()), float(w.mean()), "wis")


def mixture_is_estimate(components, target: Policy) -> Estimate:
    """Pooled estimate over several behavior policies chosen with given priors.

    ``components`` is a sequence of (SampleSet, prior, behavior Policy). Each
    history is weighted by Pr(h_a|target) / sum_j prior_j Pr(h_a|behavior_j),
    and set j contributes prior_j times its own sample mean, which keeps the
    estimator unbiased for any set sizes.
    """
    components = list(components)
    if not components:
        raise EstimationError("no sample sets")
    priors = np.array([c[1] for c in components], dtype=float)
    if np.any(priors <= 0) or abs(priors.sum() - 1.0) > 1e-12:
        raise EstimationError(f"priors must be positive and sum to 1, got {priors.tolist()}")
    behaviors = [c[2] for c in components]
    value, var, ws, n = 0.0, 0.0, [], 0
    for ss, prior, _ in components:
        if len(ss) == 0:
            raise EstimationError("empty sample set")
        log_t = target.log_prob_batch(ss.observations, ss.actions)
        log_b = np.stack([b.log_prob_batch(ss.observations, ss.actions) for b in behaviors])
        log_mix = np.logaddexp.reduce(log_b + np.log(priors)[:, None], axis=0)
        w = np.exp(log_t - log_mix)
        terms = ss.returns * w
        value += prior * float(np.mean(terms))
        if len(terms) > 1:
            var += prior**2 * float(np.var(terms, ddof=1)) / len(terms)
        ws.append(w)
        n += len(ss)
    w = np.concatenate(ws)
    return Estimate(value, math.sqrt(var), n, float(w.min()), float(w.max()), float(w.mean()), "mixture")


def eta_bound(T: int, c_floor: float, num_actions: int = 2) -> float:
    """Largest likelihood ratio against the uniform behavior: (A(1-(A-1)c))**T."""
    A = num_actions
    if not 0.0 <= c_floor <= 1.0 / A + 1e-12:
        raise EstimationError(f"floor {c_floor} outside [0, 1/{A}]")
    return (A * (1.0 - (A - 1) * c_floor)) ** T


# -------------------------------------------------------------------- oracles


def is_expectation_exact(model, target, behavior, spec, cap=DEFAULT_ENUMERATION_CAP) -> float:
    """sum_h Pr(h|behavior) R(h) w(h) by enumeration."""
    t = history_table(model, spec, cap)
    pb = t.action_prob(behavior)
    pt = t.action_prob(target)
    mask = pb > 0
    return float(np.sum(t.env_prob[mask] * pb[mask] * t.returns[mask] * (pt[mask] / pb[mask])))


def is_variance_exact(model, target, behavior, spec, N, form="line3", cap=DEFAULT_ENUMERATION_CAP) -> float:
    """Exact variance of the N-sample IS estimator.

    line1: sum (R w)^2 Pr(h|behavior) - V^2
    line2: sum (R Pr(h|target))^2 / Pr(h|behavior) - V^2
    line3: E_target[R^2 w] - V^2
    each divided by N.
    """
    t = history_table(model, spec, cap)
    pb = t.prob(behavior)
    pt = t.prob(target)
    if np.any((pt > 0) & (pb == 0)):
        raise EstimationError("target puts mass where the behavior has none")
    m = pb > 0
    R, pb, pt = t.returns[m], pb[m], pt[m]
    # environment factor cancels in w
    w = t.action_prob(target)[m] / t.action_prob(behavior)[m]
    V = float(np.sum(R * pt))
    if form == "line1":
        second = np.sum((R * w) ** 2 * pb)
    elif form == "line2":
        second = np.sum((R * pt) ** 2 / pb)
    elif form == "line3":
        second = np.sum(pt * R**2 * w)
    else:
        raise ValueError(f"unknown form {form!r}")
    return float((second - V**2) / N)


def mixture_expectation_exact(model, target, behaviors, priors, spec, cap=DEFAULT_ENUMERATION_CAP) -> float:
    t = history_table(model, spec, cap)
    pt = t.action_prob(target)
    pbs = np.stack([t.action_prob(b) for b in behaviors])
    priors = np.asarray(priors, dtype=float)
    mix = priors @ pbs
    total = 0.0
    for prior, pb in zip(priors, pbs):
        m = pb > 0
        total += prior * np.sum(t.env_prob[m] * pb[m] * t.returns[m] * pt[m] / mix[m])
    return float(total)


@dataclass(frozen=True)
class OptimalSampling:
    histories: object  # HistoryTable restricted to positive target mass
    probs: np.ndarray
    reweighted: np.ndarray
    value: float
    variance: float


def optimal_sampling_check(model, target, spec, cap=DEFAULT_ENUMERATION_CAP) -> OptimalSampling:
    """Zero-variance sampling distribution R(h) Pr(h|target) / V(target).

    Needs the full model, so it is an oracle, not something an agent can run.
    """
    t = history_table(model, spec, cap)
    p = t.prob(target)
    if np.any(t.returns[p > 0] < 0):
        raise EstimationError("zero-variance sampling needs nonnegative returns")
    V = float(np.sum(p * t.returns))
    if not V > 0:
        raise EstimationError("zero-variance sampling needs a positive value")
    q = t.returns * p / V
    m = q > 0
    reweighted = t.returns[m] * p[m] / q[m]
    variance = float(np.sum(q[m] * (reweighted - V) ** 2))
    return OptimalSampling(t, q, reweighted, V, variance)
