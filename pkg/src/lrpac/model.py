"""Tabular POMDP models, trajectory simulation, returns and the enumeration oracle."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

ROW_TOL = 1e-12
DEFAULT_ENUMERATION_CAP = 10**7


class ModelError(ValueError):
    """Raised when a model, policy or history violates its contract."""


class EnumerationCapError(RuntimeError):
    """Raised when exhaustive enumeration would exceed the configured path cap."""


@dataclass(eq=False)
class Pomdp:
    initial_dist: np.ndarray  # (S,)
    transition: np.ndarray  # (S, A, S)
    observation_fn: np.ndarray  # (S, O)
    reward: np.ndarray  # (S, A)
    r_max: float

    def __post_init__(self):
        self.initial_dist = np.asarray(self.initial_dist, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        self.observation_fn = np.asarray(self.observation_fn, dtype=float)
        self.reward = np.asarray(self.reward, dtype=float)
        self.r_max = float(self.r_max)

    @property
    def num_states(self) -> int:
        return self.initial_dist.shape[0]

    @property
    def num_observations(self) -> int:
        return self.observation_fn.shape[1]

    @property
    def num_actions(self) -> int:
        return self.reward.shape[1]


@dataclass(frozen=True)
class ReturnSpec:
    kind: str  # "finite_horizon" | "discounted"
    horizon: int
    r_max: float
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("finite_horizon", "discounted"):
            raise ModelError(f"unknown return kind {self.kind!r}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ModelError(f"horizon must be a positive integer, got {self.horizon}")
        if self.kind == "discounted":
            if self.gamma is None or not 0.0 < self.gamma < 1.0:
                raise ModelError(f"discounted return needs gamma in (0,1), got {self.gamma}")
        if self.r_max < 0:
            raise ModelError("r_max must be nonnegative")

    @property
    def big_r_max(self) -> float:
        """Bound on |R(h)|."""
        if self.kind == "finite_horizon":
            return self.horizon * self.r_max
        return self.r_max / (1.0 - self.gamma)

    def discounts(self) -> np.ndarray:
        if self.kind == "finite_horizon":
            return np.ones(self.horizon)
        return self.gamma ** np.arange(self.horizon)


@dataclass(eq=False)
class History:
    """One trajectory. ``state_trace`` is for oracles only."""

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior_probs: Optional[np.ndarray] = None
    terminal_observation: Optional[int] = None
    state_trace: Optional[np.ndarray] = field(default=None, repr=False)
    seed: Optional[int] = None

    def __len__(self):
        return len(self.actions)

    @property
    def steps(self):
        return list(zip(self.observations.tolist(), self.actions.tolist(), self.rewards.tolist()))


def _check_rows(name, table, axis=-1):
    table = np.asarray(table, dtype=float)
    if not np.all(np.isfinite(table)):
        raise ModelError(f"{name}: non-finite entry")
    neg = np.argwhere(table < 0)
    if len(neg):
        raise ModelError(f"{name}{list(neg[0])}: negative entry {table[tuple(neg[0])]}")
    sums = table.sum(axis=axis)
    bad = np.argwhere(np.abs(sums - 1.0) > ROW_TOL)
    if len(bad):
        idx = tuple(bad[0])
        raise ModelError(f"{name} row {list(idx)}: row sum {sums[idx]:.12g}")


def validate_pomdp(model: Pomdp) -> None:
    """Raise ModelError naming the first violated field, else return None."""
    S = model.initial_dist.shape
    if len(S) != 1 or S[0] < 1:
        raise ModelError("initial_dist must be a nonempty vector")
    ns = S[0]
    if model.reward.ndim != 2 or model.reward.shape[0] != ns or model.reward.shape[1] < 1:
        raise ModelError(f"reward must have shape (S, A) with S={ns}, got {model.reward.shape}")
    na = model.reward.shape[1]
    if model.transition.shape != (ns, na, ns):
        raise ModelError(f"transition must have shape {(ns, na, ns)}, got {model.transition.shape}")
    if model.observation_fn.ndim != 2 or model.observation_fn.shape[0] != ns or model.observation_fn.shape[1] < 1:
        raise ModelError(f"observation_fn must have shape (S, O), got {model.observation_fn.shape}")
    _check_rows("initial_dist", model.initial_dist)
    _check_rows("transition", model.transition)
    _check_rows("observation_fn", model.observation_fn)
    if not np.all(np.isfinite(model.reward)):
        raise ModelError("reward: non-finite entry")
    over = np.argwhere(np.abs(model.reward) > model.r_max)
    if len(over):
        s, a = over[0]
        raise ModelError(f"reward[{s}][{a}] = {model.reward[s, a]} exceeds r_max {model.r_max}")


def compute_return(h: History, spec: ReturnSpec) -> float:
    """Finite-horizon sum, or discounted sum with the first reward undiscounted."""
    rewards = np.asarray(h.rewards, dtype=float)
    if len(rewards) < spec.horizon:
        raise ModelError(f"history has {len(rewards)} steps, horizon is {spec.horizon}")
    return float(np.dot(spec.discounts(), rewards[: spec.horizon]))


def returns_of(rewards: np.ndarray, spec: ReturnSpec) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=float)
    if rewards.shape[-1] < spec.horizon:
        raise ModelError(f"histories have {rewards.shape[-1]} steps, horizon is {spec.horizon}")
    return rewards[..., : spec.horizon] @ spec.discounts()


def truncation_horizon(gamma: float, eps: float, r_max: float) -> int:
    """Smallest T with gamma**T * r_max/(1-gamma) <= eps.

    Returns 0 (and warns) when eps already covers the whole return range.
    """
    if not 0.0 < gamma < 1.0:
        raise ModelError("gamma must lie in (0, 1)")
    if eps <= 0 or r_max <= 0:
        raise ModelError("eps and r_max must be positive")
    big = r_max / (1.0 - gamma)
    if eps >= big:
        warnings.warn(f"eps={eps} >= R_max={big}; no steps needed", RuntimeWarning, stacklevel=2)
        return 0
    T = max(1, math.ceil(math.log(eps / big) / math.log(gamma)))
    # repair float rounding in either direction
    while gamma**T * big > eps:
        T += 1
    while T > 1 and gamma ** (T - 1) * big <= eps:
        T -= 1
    return T


# ---------------------------------------------------------------- simulation


def _draw(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling, one row of ``cdf`` per entry of ``u``."""
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def uniforms_for_seeds(seeds: Sequence[int], width: int) -> np.ndarray:
    """One independent PCG64 stream per seed, ``width`` uniforms each."""
    out = np.empty((len(seeds), width))
    for i, s in enumerate(seeds):
        out[i] = np.random.Generator(np.random.PCG64(int(s))).random(width)
    return out


def simulate_batch(model: Pomdp, policy, spec: ReturnSpec, seeds: Sequence[int]) -> dict:
    """Simulate one trajectory per seed; arrays are stacked row-wise.

    Uniform layout per trajectory: [s(1), then (o, a, s') per step, terminal o].
    Row i equals ``simulate_history(..., seeds[i])``.
    """
    _check_dims(model, policy)
    T = spec.horizon
    n = len(seeds)
    u = uniforms_for_seeds(seeds, 3 * T + 2)
    init_cdf = np.cumsum(model.initial_dist)[None, :]
    obs_cdf = np.cumsum(model.observation_fn, axis=1)
    trans_cdf = np.cumsum(model.transition, axis=2)
    act_cdf = np.cumsum(policy.probs, axis=1)

    states = np.empty((n, T), dtype=np.int64)
    obs = np.empty((n, T), dtype=np.int64)
    acts = np.empty((n, T), dtype=np.int64)
    bprobs = np.empty((n, T))
    s = _draw(np.broadcast_to(init_cdf, (n, init_cdf.shape[1])), u[:, 0])
    for t in range(T):
        states[:, t] = s
        o = _draw(obs_cdf[s], u[:, 1 + 3 * t])
        obs[:, t] = o
        ctx = policy.context_indices(obs[:, : t + 1])[:, t]
        a = _draw(act_cdf[ctx], u[:, 2 + 3 * t])
        acts[:, t] = a
        bprobs[:, t] = policy.probs[ctx, a]
        s = _draw(trans_cdf[s, a], u[:, 3 + 3 * t])
    terminal = _draw(obs_cdf[s], u[:, 3 * T + 1])
    rewards = model.reward[states, acts]
    return {
        "states": states,
        "observations": obs,
        "actions": acts,
        "rewards": rewards,
        "behavior_probs": bprobs,
        "terminal_observation": terminal,
        "seeds": np.asarray([int(x) for x in seeds], dtype=np.uint64),
    }


def simulate_history(model: Pomdp, policy, spec: ReturnSpec, seed: int) -> History:
    b = simulate_batch(model, policy, spec, [seed])
    return History(
        observations=b["observations"][0],
        actions=b["actions"][0],
        rewards=b["rewards"][0],
        behavior_probs=b["behavior_probs"][0],
        terminal_observation=int(b["terminal_observation"][0]),
        state_trace=b["states"][0],
        seed=int(seed),
    )


def _check_dims(model: Pomdp, policy):
    if policy.num_observations != model.num_observations or policy.num_actions != model.num_actions:
        raise ModelError(
            f"policy is ({policy.num_observations} obs, {policy.num_actions} actions), "
            f"model is ({model.num_observations} obs, {model.num_actions} actions)"
        )


# --------------------------------------------------------------- enumeration


@dataclass(eq=False)
class HistoryTable:
    """Every state/observation/action path of length T with its environment factor."""

    states: np.ndarray  # (P, T)
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    env_prob: np.ndarray  # (P,)
    returns: np.ndarray

    def __len__(self):
        return len(self.env_prob)

    def action_prob(self, policy) -> np.ndarray:
        return np.exp(policy.log_prob_batch(self.observations, self.actions))

    def prob(self, policy) -> np.ndarray:
        return self.env_prob * self.action_prob(policy)


def history_table(model: Pomdp, spec: ReturnSpec, cap: int = DEFAULT_ENUMERATION_CAP) -> HistoryTable:
    S, O, A = model.num_states, model.num_observations, model.num_actions
    T = spec.horizon
    n_paths = (S * O * A) ** T
    if n_paths > cap:
        raise EnumerationCapError(f"{n_paths} paths exceed the enumeration cap {cap}")
    grid = np.indices((S, O, A) * T).reshape(3 * T, -1).T
    states = grid[:, 0::3]
    obs = grid[:, 1::3]
    acts = grid[:, 2::3]
    p = model.initial_dist[states[:, 0]].copy()
    for t in range(T):
        p *= model.observation_fn[states[:, t], obs[:, t]]
        if t + 1 < T:
            p *= model.transition[states[:, t], acts[:, t], states[:, t + 1]]
    rewards = model.reward[states, acts]
    return HistoryTable(states, obs, acts, rewards, p, returns_of(rewards, spec))


def enumerate_histories(model: Pomdp, spec: ReturnSpec, policy, cap: int = DEFAULT_ENUMERATION_CAP):
    """All positive-probability histories as (History, env_prob, action_prob).

    The last transition is summed out, so env_prob is
    Pr(s(1)) * prod_t Pr(o(t)|s(t)) * prod_{t<T} Pr(s(t+1)|s(t),a(t)).
    """
    _check_dims(model, policy)
    table = history_table(model, spec, cap)
    act = table.action_prob(policy)
    keep = np.flatnonzero(table.env_prob * act > 0)
    out = []
    for i in keep:
        h = History(
            observations=table.observations[i],
            actions=table.actions[i],
            rewards=table.rewards[i],
            state_trace=table.states[i],
        )
        out.append((h, float(table.env_prob[i]), float(act[i])))
    return out


def exact_value(model: Pomdp, policy, spec: ReturnSpec, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    _check_dims(model, policy)
    table = history_table(model, spec, cap)
    return float(np.sum(table.prob(policy) * table.returns))
