"""Stochastic observation-conditional policies, policy classes and their metric geometry."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import ROW_TOL, ModelError

EXACT_COVER_LIMIT = 20


@dataclass(eq=False)
class Policy:
    """Action probabilities indexed by a context id.

    For ``window == 1`` the context is the current observation. For wider
    windows it is the last ``window`` observations in mixed radix
    ``num_observations + 1``, with ``num_observations`` padding the steps
    before the start of the episode.
    """

    probs: np.ndarray  # (n_contexts, A)
    num_observations: int
    window: int = 1
    floor: float = 0.0
    kind: str = "tabular_reactive"
    params: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 2:
            raise ModelError("policy table must be 2-d (contexts x actions)")
        if self.probs.shape[0] != n_contexts(self.num_observations, self.window):
            raise ModelError(
                f"policy table has {self.probs.shape[0]} rows, expected "
                f"{n_contexts(self.num_observations, self.window)}"
            )
        A = self.probs.shape[1]
        if not 0.0 <= self.floor <= 1.0 / A + ROW_TOL:
            raise ModelError(f"floor {self.floor} outside [0, 1/{A}]")
        sums = self.probs.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if len(bad):
            raise ModelError(f"policy row {bad[0]}: row sum {sums[bad[0]]:.12g}")
        low = np.argwhere(self.probs < self.floor - ROW_TOL)
        if len(low):
            c, a = low[0]
            raise ModelError(f"policy[{c}][{a}] = {self.probs[c, a]} below floor {self.floor}")

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def tabular(cls, table, floor=0.0, name=""):
        table = np.asarray(table, dtype=float)
        return cls(table, table.shape[0], 1, floor, "tabular_reactive", name=name)

    @classmethod
    def finite_window(cls, table, num_observations, window, floor=0.0, name=""):
        return cls(np.asarray(table, dtype=float), num_observations, window, floor, "finite_window", name=name)

    @classmethod
    def softmax(cls, params, floor=0.0, num_observations=None, window=1, name=""):
        """Softmax of ``params`` per context, mixed with the floor:
        (1 - A*floor) * softmax + floor."""
        params = np.asarray(params, dtype=float)
        if num_observations is None:
            if window != 1:
                raise ModelError("num_observations is required for window > 1")
            num_observations = params.shape[0]
        probs = softmax_with_floor(params, floor)
        return cls(probs, num_observations, window, floor, "softmax_parametric", params=params, name=name)

    @classmethod
    def uniform(cls, num_observations, num_actions, name="uniform"):
        A = num_actions
        return cls.tabular(np.full((num_observations, A), 1.0 / A), floor=1.0 / A, name=name)

    def context_index(self, window_obs: Sequence[int]) -> int:
        obs = list(window_obs)
        if not obs:
            raise ModelError("empty context")
        for o in obs:
            if not 0 <= o < self.num_observations:
                raise ModelError(f"observation {o} out of range [0, {self.num_observations})")
        if self.window == 1:
            return int(obs[-1])
        obs = obs[-self.window :]
        pad = [self.num_observations] * (self.window - len(obs))
        idx = 0
        for d in pad + obs:
            idx = idx * (self.num_observations + 1) + d
        return idx

    def context_indices(self, observations: np.ndarray) -> np.ndarray:
        """Context id at every step of every row of an (..., T) observation array."""
        observations = np.asarray(observations)
        if self.window == 1:
            return observations
        base = self.num_observations + 1
        T = observations.shape[-1]
        padded = np.concatenate(
            [np.full(observations.shape[:-1] + (self.window - 1,), self.num_observations), observations],
            axis=-1,
        )
        idx = np.zeros(observations.shape, dtype=np.int64)
        for j in range(self.window):
            idx = idx * base + padded[..., j : j + T]
        return idx

    def log_prob_batch(self, observations, actions) -> np.ndarray:
        """log Pr(actions | policy) per row; -inf where some action has probability 0."""
        ctx = self.context_indices(observations)
        p = self.probs[ctx, np.asarray(actions)]
        with np.errstate(divide="ignore"):
            return np.log(p).sum(axis=-1)


def n_contexts(num_observations: int, window: int) -> int:
    if window == 1:
        return num_observations
    return (num_observations + 1) ** window


def softmax_with_floor(params, floor):
    params = np.asarray(params, dtype=float)
    z = params - params.max(axis=-1, keepdims=True)
    e = np.exp(z)
    sm = e / e.sum(axis=-1, keepdims=True)
    A = params.shape[-1]
    return (1.0 - A * floor) * sm + floor


def action_distribution(p: Policy, context) -> np.ndarray:
    """Action probabilities for an observation or a window of recent observations."""
    if np.ndim(context) == 0:
        context = [int(context)]
    return p.probs[p.context_index(context)].copy()


def log_prob_actions(p: Policy, h) -> float:
    """log Pr(h_a | p). Returns -inf, never raises, when an action has probability 0."""
    if len(h.actions) < 1:
        raise ModelError("empty history")
    return float(p.log_prob_batch(np.asarray(h.observations)[None, :], np.asarray(h.actions)[None, :])[0])


def all_contexts(p: Policy) -> list:
    return list(range(p.probs.shape[0]))


def policy_distance(p: Policy, q: Policy, contexts: Optional[Sequence[int]] = None) -> float:
    """max over (context, action) of |log p - log q|; inf if exactly one side is zero."""
    if p.probs.shape != q.probs.shape or p.window != q.window:
        raise ModelError("policies have different dimensions")
    if contexts is None:
        contexts = all_contexts(p)
    a = p.probs[list(contexts)]
    b = q.probs[list(contexts)]
    both_zero = (a == 0) & (b == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.abs(np.log(a) - np.log(b))
    d[both_zero] = 0.0
    return float(d.max()) if d.size else 0.0


# ------------------------------------------------------------- policy classes


@dataclass(eq=False)
class PolicyClass:
    members: list
    floor: float
    contexts: list
    name: str = ""

    def __post_init__(self):
        if not self.members:
            raise ModelError("policy class is empty")
        if not self.contexts:
            raise ModelError("context space is empty")
        first = self.members[0]
        for m in self.members[1:]:
            if m.probs.shape != first.probs.shape or m.window != first.window:
                raise ModelError("policy class members have different dimensions")
        for m in self.members:
            if m.floor != self.floor:
                raise ModelError(f"member floor {m.floor} differs from class floor {self.floor}")
        self._dist = None

    def __len__(self):
        return len(self.members)

    @classmethod
    def of(cls, members, floor=None, contexts=None, name=""):
        members = list(members)
        if not members:
            raise ModelError("policy class is empty")
        if floor is None:
            floor = members[0].floor
        if contexts is None:
            contexts = all_contexts(members[0])
        return cls(members, floor, list(contexts), name)

    @classmethod
    def softmax_grid(cls, num_observations, num_actions, low, high, steps, floor, window=1, name=""):
        """Softmax policies whose logits (action 0 pinned to 0) range over a shared grid."""
        values = np.linspace(low, high, steps)
        nc = n_contexts(num_observations, window)
        free = nc * (num_actions - 1)
        members = []
        for combo in itertools.product(values, repeat=free):
            logits = np.zeros((nc, num_actions))
            logits[:, 1:] = np.asarray(combo).reshape(nc, num_actions - 1)
            members.append(Policy.softmax(logits, floor, num_observations, window))
        return cls.of(members, floor, name=name)

    def distance_matrix(self) -> np.ndarray:
        if self._dist is None:
            m = len(self.members)
            D = np.zeros((m, m))
            for i in range(m):
                for j in range(i + 1, m):
                    D[i, j] = D[j, i] = policy_distance(self.members[i], self.members[j], self.contexts)
            self._dist = D
        return self._dist


@dataclass(frozen=True)
class Cover:
    centers: tuple
    exact: bool

    @property
    def size(self):
        return len(self.centers)


def _greedy_cover(masks, full):
    covered, centers = 0, []
    while covered != full:
        j = max(range(len(masks)), key=lambda k: bin(masks[k] & ~covered).count("1"))
        centers.append(j)
        covered |= masks[j]
    return centers


def find_cover(cls: PolicyClass, eps: float, exact_limit: int = EXACT_COVER_LIMIT) -> Cover:
    """Closed D-inf balls of radius eps centred at members, as few as possible.

    Exhaustive search up to ``exact_limit`` members, greedy (flagged inexact) above.
    """
    if eps < 0:
        raise ModelError("eps must be nonnegative")
    D = cls.distance_matrix()
    m = len(D)
    masks = [sum(1 << i for i in range(m) if D[i, j] <= eps) for j in range(m)]
    full = (1 << m) - 1
    greedy = _greedy_cover(masks, full)
    if m > exact_limit:
        return Cover(tuple(greedy), False)
    for k in range(1, len(greedy)):
        for combo in itertools.combinations(range(m), k):
            acc = 0
            for j in combo:
                acc |= masks[j]
            if acc == full:
                return Cover(combo, True)
    return Cover(tuple(greedy), True)


def covering_number(cls: PolicyClass, eps: float) -> int:
    return find_cover(cls, eps).size


def metric_entropy(cls: PolicyClass, eps: float) -> float:
    return math.log(covering_number(cls, eps))


def class_floor(cls: PolicyClass) -> float:
    return float(min(m.probs[cls.contexts].min() for m in cls.members))


# ----------------------------------------------------------- entropy profiles


@dataclass(frozen=True)
class EntropyProfile:
    """Either a tabulated step function or the parametric form k1*log(k2*sqrt(T)/eps).

    Tabulated pairs are read conservatively: log N(eps) is the value at the
    largest tabulated eps_i <= eps, and infinite below the smallest eps_i.
    """

    eps: tuple = ()
    log_n: tuple = ()
    k1: Optional[float] = None
    k2: Optional[float] = None
    horizon: Optional[int] = None

    def __post_init__(self):
        if self.k1 is not None:
            if self.k1 <= 0 or self.k2 is None or self.k2 <= 0:
                raise ModelError("parametric profile needs k1 > 0 and k2 > 0")
            return
        if len(self.eps) == 0 or len(self.eps) != len(self.log_n):
            raise ModelError("tabulated profile needs matching nonempty eps and log_n")
        e = np.asarray(self.eps)
        k = np.asarray(self.log_n)
        if np.any(np.diff(e) >= 0):
            raise ModelError("tabulated eps must be strictly decreasing")
        if np.any(k < 0) or np.any(np.diff(k) < 0):
            raise ModelError("tabulated log N must be nonnegative and nonincreasing in eps")

    @property
    def parametric(self) -> bool:
        return self.k1 is not None

    @classmethod
    def constant(cls, log_n: float):
        return cls(eps=(0.0,), log_n=(float(log_n),))

    @classmethod
    def from_class(cls, pc: PolicyClass):
        """Exact step profile: the covering number only changes at pairwise distances."""
        D = pc.distance_matrix()
        breaks = sorted({float(x) for x in D.ravel() if np.isfinite(x)} | {0.0}, reverse=True)
        logs = [metric_entropy(pc, e) for e in breaks]
        return cls(eps=tuple(breaks), log_n=tuple(logs))

    def log_n_at(self, eps: float, horizon: Optional[int] = None) -> float:
        if self.parametric:
            T = horizon if horizon is not None else self.horizon
            if T is None:
                raise ModelError("parametric profile needs a horizon")
            return parametric_entropy(self, T, eps)
        if eps < 0:
            raise ModelError("eps must be nonnegative")
        e = np.asarray(self.eps)
        ok = np.flatnonzero(e <= eps)
        if len(ok) == 0:
            return math.inf
        return float(self.log_n[ok[0]])

    def covering_at(self, eps: float, horizon: Optional[int] = None) -> float:
        return math.exp(self.log_n_at(eps, horizon))


def parametric_entropy(profile: EntropyProfile, T: int, eps: float) -> float:
    """max(0, k1*log(k2*sqrt(T)/eps))."""
    if eps <= 0:
        raise ModelError("eps must be positive")
    if not profile.parametric:
        raise ModelError("profile is not parametric")
    return max(0.0, profile.k1 * math.log(profile.k2 * math.sqrt(T) / eps))
