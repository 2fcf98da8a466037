"""Two-stage evaluation pipeline, coverage experiments and comparison tables."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bounds as bd
from .estimators import (
    SampleSet,
    crude_estimate,
    eta_bound,
    is_estimate,
    is_variance_exact,
    mixture_is_estimate,
    sample_set,
    wis_estimate,
)
from .model import ModelError, Pomdp, ReturnSpec, exact_value, history_table
from .policies import EntropyProfile, Policy, PolicyClass
from .seeding import derive_seeds, mix_seed


# ----------------------------------------------------------- default instance


def default_model(positive_rewards: bool = False) -> Pomdp:
    """2 states, 2 observations, 2 actions; rewards in [0, 1]."""
    reward = np.array([[1.0, 0.2], [0.0, 0.6]])
    if positive_rewards:
        reward = np.array([[1.0, 0.2], [0.1, 0.6]])
    return Pomdp(
        initial_dist=[0.6, 0.4],
        transition=[[[0.7, 0.3], [0.2, 0.8]], [[0.4, 0.6], [0.9, 0.1]]],
        observation_fn=[[0.8, 0.2], [0.3, 0.7]],
        reward=reward,
        r_max=1.0,
    )


DEFAULT_HORIZON = 4
DEFAULT_FLOOR = 0.1


def default_spec() -> ReturnSpec:
    return ReturnSpec("finite_horizon", DEFAULT_HORIZON, 1.0)


def default_target() -> Policy:
    return Policy.tabular([[0.9, 0.1], [0.3, 0.7]], floor=DEFAULT_FLOOR, name="target")


def default_class() -> PolicyClass:
    """8 reactive policies with floor 0.1."""
    members = []
    for p0 in (0.1, 0.3, 0.7, 0.9):
        for p1 in (0.1, 0.9):
            members.append(Policy.tabular([[p0, 1 - p0], [p1, 1 - p1]], floor=DEFAULT_FLOOR, name=f"p{p0}-{p1}"))
    return PolicyClass.of(members, DEFAULT_FLOOR, name="grid8")


def ratio_bound(targets: Sequence[Policy], behavior: Policy, horizon: int) -> float:
    """Upper bound on every likelihood ratio: (max per-step ratio) ** T.

    Equals (A(1-(A-1)c))**T for a uniform behavior and floor c.
    """
    worst = 1.0
    for t in targets:
        with np.errstate(divide="ignore"):
            r = np.where(t.probs > 0, t.probs / behavior.probs, 0.0)
        worst = max(worst, float(r.max()))
    return worst**horizon


# ------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    model: Pomdp
    behavior: Policy
    spec: ReturnSpec
    target: Optional[Policy] = None
    target_class: Optional[PolicyClass] = None
    mixture: list = field(default_factory=list)  # [(Policy, prior)]
    n: int = 200
    m: int = 1000
    epsilon: Optional[float] = None
    delta: float = 0.1
    variant: str = bd.PAPER_FORM
    master_seed: int = 0
    v_max: Optional[float] = None
    eta: Optional[float] = None
    schedule: tuple = (10, 100, 1000)
    replications: int = 500
    workers: int = 1
    dataset_path: Optional[str] = None
    output_path: Optional[str] = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ModelError("n and m must be at least 1")
        if not 0 < self.delta < 1:
            raise ModelError(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def vmax(self) -> float:
        return self.v_max if self.v_max is not None else self.spec.big_r_max

    def eta_for(self, targets) -> float:
        return self.eta if self.eta is not None else ratio_bound(targets, self.behavior, self.spec.horizon)


def default_config(**overrides) -> ExperimentConfig:
    kw = dict(
        model=default_model(),
        behavior=Policy.uniform(2, 2, name="uniform"),
        spec=default_spec(),
        target=default_target(),
        target_class=default_class(),
        n=200,
        m=1000,
        delta=0.1,
        master_seed=20011,
    )
    kw.update(overrides)
    return ExperimentConfig(**kw)


# ------------------------------------------------------------------ pipeline


class Pipeline:
    """Sampling stage done; answers value queries without touching the environment."""

    def __init__(self, samples: SampleSet):
        self.samples = samples

    def estimate(self, target: Policy, kind: str = "is"):
        if kind == "is":
            return is_estimate(self.samples, target)
        if kind == "wis":
            return wis_estimate(self.samples, target)
        if kind == "crude":
            return crude_estimate(self.samples.returns)
        raise ValueError(f"unknown estimator {kind!r}")


def run_pipeline(config: ExperimentConfig, dataset_path=None) -> Pipeline:
    """Simulate N behavior histories, persist them if a path is given, return the estimator."""
    samples = sample_set(config.model, config.behavior, config.spec, config.n, config.master_seed)
    path = dataset_path or config.dataset_path
    if path is not None:
        from .formats import write_dataset

        Path(path).parent.mkdir(parents=True, exist_ok=True)
        write_dataset(samples, path)
    return Pipeline(samples)


# ------------------------------------------------------------------ coverage


@dataclass
class CoverageResult:
    deviations: np.ndarray
    epsilon: float
    violation_count: int
    empirical_rate: float
    bound_rate: float
    true_value: float
    eta: float
    class_deviations: Optional[np.ndarray] = None
    class_epsilon: Optional[float] = None
    class_violation_count: Optional[int] = None
    class_empirical_rate: Optional[float] = None
    class_eta: Optional[float] = None


def _replicate(args):
    config, rep_seed, targets = args
    ss = sample_set(config.model, config.behavior, config.spec, config.n, rep_seed)
    return [is_estimate(ss, t).value for t in targets]


def _map(fn, jobs, workers):
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def coverage_experiment(config: ExperimentConfig) -> CoverageResult:
    """M replications of N-sample IS estimation against the exact value.

    Replication r uses master seed mix_seed(config.master_seed, r).
    """
    if config.target is None:
        raise ModelError("coverage needs a target policy")
    targets = [config.target] + (list(config.target_class.members) if config.target_class else [])
    exact = np.array([exact_value(config.model, t, config.spec) for t in targets])
    rep_seeds = derive_seeds(config.master_seed, config.m)
    jobs = [(config, int(s), targets) for s in rep_seeds]
    est = np.array(_map(_replicate, jobs, config.workers))

    eta = config.eta_for([config.target])
    if config.epsilon is not None:
        eps = config.epsilon
    else:
        eps = bd.single_policy_epsilon(bd.BoundInputs(config.vmax, eta, config.delta), config.n, config.variant)
    dev = np.abs(est[:, 0] - exact[0])
    count = int(np.sum(dev > eps))
    res = CoverageResult(dev, eps, count, count / config.m, config.delta, float(exact[0]), eta)

    if config.target_class is not None:
        cls = config.target_class
        ceta = config.eta_for(cls.members)
        profile = EntropyProfile.from_class(cls)
        inputs = bd.BoundInputs(config.vmax, ceta, config.delta, config.spec.horizon, profile)
        ceps = config.epsilon if config.epsilon is not None else bd.uniform_epsilon(inputs, config.n)
        cdev = np.abs(est[:, 1:] - exact[1:]).max(axis=1)
        ccount = int(np.sum(cdev > ceps))
        res.class_deviations = cdev
        res.class_epsilon = ceps
        res.class_violation_count = ccount
        res.class_empirical_rate = ccount / config.m
        res.class_eta = ceta
    return res


COVERAGE_COLUMNS = [
    "scope", "n", "m", "delta", "variant", "v_max", "eta", "epsilon", "violation_count",
    "empirical_rate", "bound_rate", "median_deviation", "max_deviation", "true_value", "master_seed",
]


def coverage_rows(config: ExperimentConfig, res: CoverageResult) -> list:
    rows = [{
        "scope": "single", "n": config.n, "m": config.m, "delta": config.delta, "variant": config.variant,
        "v_max": config.vmax, "eta": res.eta, "epsilon": res.epsilon, "violation_count": res.violation_count,
        "empirical_rate": res.empirical_rate, "bound_rate": res.bound_rate,
        "median_deviation": float(np.median(res.deviations)), "max_deviation": float(res.deviations.max()),
        "true_value": res.true_value, "master_seed": config.master_seed,
    }]
    if res.class_deviations is not None:
        rows.append({
            "scope": "class_sup", "n": config.n, "m": config.m, "delta": config.delta, "variant": "uniform",
            "v_max": config.vmax, "eta": res.class_eta, "epsilon": res.class_epsilon,
            "violation_count": res.class_violation_count, "empirical_rate": res.class_empirical_rate,
            "bound_rate": res.bound_rate, "median_deviation": float(np.median(res.class_deviations)),
            "max_deviation": float(res.class_deviations.max()), "true_value": None,
            "master_seed": config.master_seed,
        })
    return rows


# ------------------------------------------------------- estimator comparison


COMPARISON_COLUMNS = [
    "estimator", "n", "replications", "exact_value", "mean", "bias", "variance",
    "bias_std_error", "theoretical_variance",
]


def _compare_one(args):
    config, rep_seed, n, mixture = args
    on = sample_set(config.model, config.target, config.spec, n, mix_seed(rep_seed, 0))
    off = sample_set(config.model, config.behavior, config.spec, n, mix_seed(rep_seed, 1))
    out = [crude_estimate(on.returns).value, is_estimate(off, config.target).value, wis_estimate(off, config.target).value]
    if mixture:
        comps = []
        sizes = _split(n, [p for _, p in mixture])
        for j, ((pol, prior), k) in enumerate(zip(mixture, sizes)):
            comps.append((sample_set(config.model, pol, config.spec, k, mix_seed(rep_seed, 2 + j)), prior, pol))
        out.append(mixture_is_estimate(comps, config.target).value)
    return out


def _split(n, priors):
    sizes = [max(1, int(round(n * p))) for p in priors]
    sizes[-1] = max(1, n - sum(sizes[:-1]))
    return sizes


def estimator_comparison(config: ExperimentConfig) -> list:
    """Replicated bias and variance of crude (on-policy), IS, WIS and mixture estimators."""
    if config.target is None:
        raise ModelError("estimator comparison needs a target policy")
    V = exact_value(config.model, config.target, config.spec)
    t = history_table(config.model, config.spec)
    p = t.prob(config.target)
    crude_var = float(np.sum(p * t.returns**2) - V**2)
    mixture = list(config.mixture)
    names = ["crude", "is", "wis"] + (["mixture"] if mixture else [])
    rows = []
    for si, n in enumerate(config.schedule):
        seeds = derive_seeds(mix_seed(config.master_seed, si), config.replications)
        jobs = [(config, int(s), n, mixture) for s in seeds]
        est = np.array(_map(_compare_one, jobs, config.workers))
        for k, name in enumerate(names):
            col = est[:, k]
            var = float(np.var(col, ddof=1)) if len(col) > 1 else 0.0
            theo = None
            if name == "crude":
                theo = crude_var / n
            elif name == "is":
                theo = is_variance_exact(config.model, config.target, config.behavior, config.spec, n)
            rows.append({
                "estimator": name, "n": n, "replications": config.replications, "exact_value": V,
                "mean": float(col.mean()), "bias": float(col.mean() - V), "variance": var,
                "bias_std_error": math.sqrt(var / len(col)), "theoretical_variance": theo,
            })
    return rows


# ----------------------------------------------------------- bound comparison


BOUND_COLUMNS = [
    "horizon", "v_max_over_eps", "delta", "entropy", "vc_dim", "k1", "c_floor", "eta",
    "uniform_exact", "uniform_big_o", "kearns", "mcdiarmid", "parametric",
]


def default_grid() -> dict:
    return {
        "horizons": [2, 4, 6, 8, 10],
        "ratios": [float(x) for x in np.geomspace(1e6, 1e10, 9)],
        "delta": 0.1,
        "entropy": 2.0,
        "vc_dim": 2,
        "k1": 2.0,
        "c_floor": 0.1,
        "num_actions": 2,
    }


def bound_comparison(grid: Optional[dict] = None) -> list:
    """Sample sizes from every formula over (horizon, v_max/eps); eps is held at 1."""
    g = default_grid()
    g.update(grid or {})
    rows = []
    for T in g["horizons"]:
        eta = eta_bound(T, g["c_floor"], g.get("num_actions", 2))
        for r in g["ratios"]:
            inputs = bd.BoundInputs(r, eta, g["delta"], T, g["entropy"], g["vc_dim"], g["c_floor"])
            rows.append({
                "horizon": T, "v_max_over_eps": r, "delta": g["delta"], "entropy": g["entropy"],
                "vc_dim": g["vc_dim"], "k1": g["k1"], "c_floor": g["c_floor"], "eta": eta,
                "uniform_exact": bd.uniform_sample_size(inputs, 1.0),
                "uniform_big_o": bd.uniform_sample_size_big_o(inputs, 1.0),
                "kearns": bd.kearns_sample_size(r, T, g["vc_dim"], g["delta"]) if T >= 2 else None,
                "mcdiarmid": bd.mcdiarmid_sample_size(inputs, 1.0),
                "parametric": bd.parametric_sample_size(r, 1.0, g["k1"], g["entropy"], g["delta"], T),
            })
    return rows


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def bound_slopes(rows, horizon) -> dict:
    sel = [r for r in rows if r["horizon"] == horizon]
    x = [r["v_max_over_eps"] for r in sel]
    return {k: loglog_slope(x, [r[k] for r in sel])
            for k in ("uniform_exact", "uniform_big_o", "kearns", "mcdiarmid", "parametric")}
