"""Likelihood-ratio policy evaluation for tabular POMDPs, with PAC-style sample-size bounds."""

from .bounds import (
    BoundInputs,
    bernstein_tail,
    eta_from_regret,
    kearns_sample_size,
    mcdiarmid_sample_size,
    parametric_regret,
    parametric_sample_size,
    regret_bound,
    single_policy_epsilon,
    srm_select,
    uniform_epsilon,
    uniform_sample_size,
)
from .estimators import (
    Estimate,
    SampleSet,
    crude_estimate,
    eta_bound,
    is_estimate,
    is_variance_exact,
    likelihood_ratio,
    mixture_is_estimate,
    optimal_sampling_check,
    sample_set,
    wis_estimate,
)
from .model import (
    History,
    Pomdp,
    ReturnSpec,
    compute_return,
    enumerate_histories,
    exact_value,
    simulate_history,
    truncation_horizon,
    validate_pomdp,
)
from .policies import (
    EntropyProfile,
    Policy,
    PolicyClass,
    action_distribution,
    class_floor,
    covering_number,
    log_prob_actions,
    metric_entropy,
    parametric_entropy,
    policy_distance,
)

__version__ = "0.1.0"
