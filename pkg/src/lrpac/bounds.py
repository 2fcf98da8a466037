"""Deviation radii and sample sizes for likelihood-ratio value estimates.

Natural logarithms throughout. Order-of-magnitude formulas are evaluated
with unit constant and reported as ``big_o_unit_constant``; the uniform
convergence inequality with constants 8 and 128 is the only constant-exact
sample-size path.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, optimize

from .policies import EntropyProfile

PAPER_FORM = "paper_form"
EXACT_FORM = "exact_form"
BIG_O = "big_o_unit_constant"


class BoundError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundInputs:
    v_max: float
    eta: float
    delta: float
    horizon: int = 1
    entropy: Union[EntropyProfile, float, None] = None
    vc_dim: Optional[int] = None
    c_floor: float = 0.0

    def __post_init__(self):
        if not self.v_max > 0:
            raise BoundError(f"v_max must be positive, got {self.v_max}")
        if not self.eta >= 1:
            raise BoundError(f"eta must be >= 1, got {self.eta}")
        if not 0 < self.delta < 1:
            raise BoundError(f"delta must lie in (0, 1), got {self.delta}")
        if isinstance(self.entropy, (int, float)) and self.entropy < 0:
            raise BoundError("entropy must be nonnegative")

    def log_n(self, eps: float) -> float:
        """Metric entropy at radius eps (a constant K is used as-is)."""
        if self.entropy is None:
            return 0.0
        if isinstance(self.entropy, EntropyProfile):
            return self.entropy.log_n_at(eps, self.horizon)
        return float(self.entropy)

    def covering(self, eps: float) -> float:
        return math.exp(self.log_n(eps))


@dataclass(frozen=True)
class BoundReport:
    quantity: str
    value: float
    formula_variant: str
    inputs: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {"quantity": self.quantity, "value": self.value, "formula_variant": self.formula_variant, **self.inputs}


def _echo(inputs: BoundInputs) -> dict:
    d = asdict(inputs)
    ent = inputs.entropy
    if isinstance(ent, EntropyProfile):
        d["entropy"] = f"k1={ent.k1},k2={ent.k2}" if ent.parametric else "tabulated"
    return d


# ------------------------------------------------------------ single policy


def bernstein_tail(eps: float, n: int, variance_sum_bound: float, magnitude_bound: float) -> float:
    """2 exp(-eps^2 n / (2 (L + a eps))), clamped to [0, 1]."""
    if not eps > 0 or not n > 0:
        raise BoundError("eps and n must be positive")
    if variance_sum_bound < 0 or not magnitude_bound > 0:
        raise BoundError("need L >= 0 and a > 0")
    return min(1.0, 2.0 * math.exp(-0.5 * eps**2 * n / (variance_sum_bound + magnitude_bound * eps)))


def _radius(v_max, eta, n, b):
    return (v_max / n) * (b * eta + math.sqrt(2 * b * (eta - 1) + b**2 * eta**2))


def single_policy_epsilon(inputs: BoundInputs, n: int, variant: str = PAPER_FORM) -> float:
    """Deviation radius for one target policy from n behavior samples.

    ``paper_form`` uses b = log(1/delta); ``exact_form`` uses b = log(2/delta),
    the exact root of the two-sided Bernstein tail set equal to delta.
    """
    if n < 1:
        raise BoundError("n must be at least 1")
    if variant == PAPER_FORM:
        b = math.log(1 / inputs.delta)
    elif variant == EXACT_FORM:
        b = math.log(2 / inputs.delta)
    else:
        raise BoundError(f"unknown variant {variant!r}")
    return _radius(inputs.v_max, inputs.eta, n, b)


def single_policy_tail(inputs: BoundInputs, n: int, eps: float) -> float:
    """Bernstein tail with L = v_max^2 (eta-1)/n and a = v_max eta."""
    return bernstein_tail(eps, n, inputs.v_max**2 * (inputs.eta - 1) / n, inputs.v_max * inputs.eta)


# --------------------------------------------------------------- uniform


def uniform_tail(inputs: BoundInputs, n: float, eps: float, n_cov: float) -> float:
    """8 N(eps/8) exp(-eps^2 n / (128 (v^2(eta-1)/n + v eta eps/8))), unclamped."""
    if n <= 0:
        return math.inf
    v, eta = inputs.v_max, inputs.eta
    denom = v**2 * (eta - 1) / n + v * eta * eps / 8
    return 8 * n_cov * math.exp(-eps**2 * n / (128 * denom))


def _c0(inputs, n_cov):
    if not math.isfinite(n_cov):
        raise BoundError("covering number is infinite")
    return 128 * math.log(8 * n_cov / inputs.delta)


def _covering_fn(inputs, covering_fn):
    return covering_fn if covering_fn is not None else inputs.covering


def uniform_sample_size(inputs: BoundInputs, eps: float, covering_fn: Optional[Callable] = None) -> int:
    """Smallest N for which the uniform-convergence inequality holds at eps."""
    if not eps > 0:
        raise BoundError("eps must be positive")
    n_cov = _covering_fn(inputs, covering_fn)(eps / 8)
    c0 = _c0(inputs, n_cov)
    A = inputs.v_max**2 * (inputs.eta - 1)
    B = inputs.v_max * inputs.eta * eps / 8
    root = (c0 * B + math.sqrt((c0 * B) ** 2 + 4 * eps**2 * c0 * A)) / (2 * eps**2)
    N = max(1, math.ceil(root))
    while uniform_tail(inputs, N, eps, n_cov) > inputs.delta:
        N += 1
    while N > 1 and uniform_tail(inputs, N - 1, eps, n_cov) <= inputs.delta:
        N -= 1
    return N


def _uniform_radius(inputs, n, n_cov):
    c0 = _c0(inputs, n_cov)
    v, eta = inputs.v_max, inputs.eta
    lin = c0 * v * eta * n / 8
    return (lin + math.sqrt(lin**2 + 4 * n**2 * c0 * v**2 * (eta - 1))) / (2 * n**2)


def uniform_epsilon(
    inputs: BoundInputs,
    n: int,
    covering_fn: Optional[Callable] = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> float:
    """Radius holding simultaneously over the class for n samples.

    Fixed-point iteration on eps -> root(N(eps/8)); if it cycles (step-shaped
    covering numbers) the smallest eps with eps >= root(N(eps/8)) is found by
    bisection. The result is nudged up by one part in 1e12 so that it is
    never below the true radius after rounding.
    """
    if n < 1:
        raise BoundError("n must be at least 1")
    cov = _covering_fn(inputs, covering_fn)

    def g(e):
        return _uniform_radius(inputs, n, cov(e / 8))

    eps = g(inputs.v_max * inputs.eta * 8)
    for _ in range(max_iter):
        nxt = g(eps)
        if abs(nxt - eps) <= tol:
            return nxt * (1 + 1e-12)
        eps = nxt
    # no fixed point reached: bisect for the crossing of e - g(e)
    lo, hi = min(eps, nxt) / 2, max(eps, nxt)
    while hi - g(hi) < 0:
        hi *= 2
        if hi > 1e300:
            raise ConvergenceError("uniform_epsilon did not converge")
    while lo > 0 and lo - g(lo) >= 0:
        lo /= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - g(mid) >= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * max(1.0, hi):
            return hi * (1 + 1e-12)
    raise ConvergenceError(f"uniform_epsilon did not converge after {max_iter} iterations")


def uniform_sample_size_big_o(inputs: BoundInputs, eps: float) -> float:
    """(v/eps) eta (log 1/delta + K(eps)), unit constant."""
    return inputs.v_max / eps * inputs.eta * (math.log(1 / inputs.delta) + inputs.log_n(eps))


# ----------------------------------------------------------- comparisons


def kearns_sample_size(v_max_over_eps: float, T: int, vc: int, delta: float) -> float:
    """(v/eps)^2 4^T VC log T (T + log(v/eps) + log 1/delta), unit constant."""
    if T < 2:
        raise BoundError("horizon must be at least 2 so that log T > 0")
    if not 0 < delta <= 1:
        raise BoundError("delta must lie in (0, 1]")
    r = v_max_over_eps
    return r**2 * 2.0 ** (2 * T) * vc * math.log(T) * (T + math.log(r) + math.log(1 / delta))


def mcdiarmid_sample_size(inputs: BoundInputs, eps: float) -> float:
    """(v/eps)^2 eta^2 (K + log 1/delta), unit constant; eta^2 = 4^T (1-c)^(2T) for binary actions."""
    if not eps > 0:
        raise BoundError("eps must be positive")
    return (inputs.v_max / eps) ** 2 * inputs.eta**2 * (inputs.log_n(eps) + math.log(1 / inputs.delta))


# ---------------------------------------------------------------- regret


def _sqrt_entropy_integral(entropy_fn, a, b, tol):
    val, err = integrate.quad(lambda t: math.sqrt(max(entropy_fn(t), 0.0)), a, b, epsabs=tol, epsrel=tol, limit=200)
    if not math.isfinite(val) or err > max(1e3 * tol, 1e-8 * abs(val)):
        raise ConvergenceError(f"entropy integral on [{a}, {b}] did not converge (err {err})")
    return val


def regret_objective(entropy_fn, eps, tol=1e-9):
    return entropy_fn(eps) + 24 * _sqrt_entropy_integral(entropy_fn, 0.0, eps, tol)


def regret_bound(
    entropy_fn: Callable[[float], float],
    integration_tolerance: float = 1e-9,
    eps_min: float = 1e-12,
    eps_max: float = 1e3,
    grid_points: int = 400,
) -> float:
    """inf over eps of log N(eps) + 24 * integral_0^eps sqrt(log N(tau)) dtau.

    Coarse search over a log-spaced grid, the integral accumulated piece by
    piece, then golden-section refinement inside the best bracket.
    """
    if isinstance(entropy_fn, EntropyProfile):
        if not entropy_fn.parametric:
            return step_regret_bound(entropy_fn)
        entropy_fn = profile_entropy_fn(entropy_fn)
    grid = np.geomspace(eps_min, eps_max, grid_points)
    head = _sqrt_entropy_integral(entropy_fn, 0.0, grid[0], integration_tolerance)
    if not math.isfinite(entropy_fn(grid[0])):
        raise ConvergenceError("entropy is infinite at the smallest radius")
    cum = [head]
    for a, b in zip(grid[:-1], grid[1:]):
        cum.append(cum[-1] + _sqrt_entropy_integral(entropy_fn, a, b, integration_tolerance))
    vals = np.array([entropy_fn(e) + 24 * c for e, c in zip(grid, cum)])
    k = int(np.argmin(vals))
    best = float(vals[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda e: regret_objective(entropy_fn, e, integration_tolerance),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": integration_tolerance * lo + 1e-15},
        )
        if res.success and res.fun < best:
            best = float(res.fun)
    return max(best, 0.0)


def step_regret_bound(profile: EntropyProfile) -> float:
    """Exact infimum for a tabulated (step) profile.

    Between breakpoints the entropy is flat and the integral grows, so the
    infimum sits at a breakpoint, or at the eps -> 0 limit when eps = 0 is
    tabulated.
    """
    eps = list(profile.eps)[::-1]
    logs = list(profile.log_n)[::-1]
    best, integral, prev = math.inf, 0.0, None
    for i, (e, k) in enumerate(zip(eps, logs)):
        if prev is not None:
            integral += (e - prev) * math.sqrt(logs[i - 1])
        best = min(best, k + 24 * integral)
        prev = e
    if eps[0] > 0:
        raise ConvergenceError("entropy is infinite below the smallest tabulated radius")
    return best


def profile_entropy_fn(profile: EntropyProfile, horizon: Optional[int] = None):
    return lambda eps: profile.log_n_at(eps, horizon)


def eta_from_regret(r_t: float) -> float:
    if r_t < 0:
        raise BoundError("regret must be nonnegative")
    return math.exp(r_t)


def parametric_regret(k1: float, T: int) -> float:
    """Leading term (k1/2) log T; the o(log T) remainder is dropped."""
    if T < 1:
        raise BoundError("T must be at least 1")
    return k1 / 2 * math.log(T)


def parametric_sample_size(v_max: float, eps: float, k1: float, K: float, delta: float, T: int) -> float:
    """(v/eps) T^(k1/2) (K + log 1/delta), unit constant."""
    if not eps > 0 or not v_max > 0 or T < 1 or not 0 < delta <= 1:
        raise BoundError("invalid inputs")
    return v_max / eps * T ** (k1 / 2) * (K + math.log(1 / delta))


# ------------------------------------------------------------------- SRM


@dataclass(frozen=True)
class SrmChoice:
    chosen: str
    epsilons: list
    lower_bounds: list
    ids: list


def srm_select(classes: Sequence, n: int, delta: float, shared: BoundInputs) -> SrmChoice:
    """Pick the class with the best pessimistic value V_hat - eps.

    ``classes`` holds (id, entropy, best estimate) with entropy a profile or a
    constant K. Confidence is split evenly across classes. Ties go to the
    class with smaller entropy, then to the earlier one.
    """
    classes = list(classes)
    if not classes:
        raise BoundError("no candidate classes")
    d = delta / len(classes)
    eps, lcb, keys = [], [], []
    for cid, entropy, v_hat in classes:
        inp = BoundInputs(shared.v_max, shared.eta, d, shared.horizon, entropy, shared.vc_dim, shared.c_floor)
        e = uniform_epsilon(inp, n)
        eps.append(e)
        lcb.append(v_hat - e)
        keys.append(inp.log_n(e / 8))
    order = sorted(range(len(classes)), key=lambda i: (-lcb[i], keys[i], i))
    return SrmChoice(classes[order[0]][0], eps, lcb, [c[0] for c in classes])


def srm_switch_threshold(simple, rich, delta: float, shared: BoundInputs, n_max: int = 10**12) -> int:
    """Smallest N at which srm_select prefers ``rich`` over ``simple``.

    Solved on the continuous radius difference, then settled on integers.
    """

    def margin(n):
        c = srm_select([simple, rich], n, delta, shared)
        return c.lower_bounds[1] - c.lower_bounds[0]

    def chooses_rich(n):
        return srm_select([simple, rich], n, delta, shared).chosen == rich[0]

    if chooses_rich(1):
        return 1
    if not chooses_rich(n_max):
        raise BoundError("the richer class is never selected below n_max")
    root = optimize.brentq(margin, 1.0, float(n_max), xtol=1e-6)
    N = max(1, math.ceil(root))
    while not chooses_rich(N):
        N += 1
    while N > 1 and chooses_rich(N - 1):
        N -= 1
    return N
