"""Command-line front end.

Settings come from one JSON config per run; command-line flags override
config fields, and built-in defaults fill whatever is left.

Exit codes: 0 success, 1 validation error, 2 numeric failure
(non-convergence, enumeration cap), 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bounds as bd
from . import experiments as ex
from . import formats as fm
from .estimators import (
    EstimationError,
    crude_estimate,
    eta_bound,
    is_estimate,
    is_expectation_exact,
    is_variance_exact,
    wis_estimate,
)
from .model import EnumerationCapError, ModelError, exact_value
from .policies import EntropyProfile, Policy

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--seed", type=int, help="override master_seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lrpac", description="Off-policy value estimation and sample-size bounds for tabular POMDPs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check model/policy/class/config files")
    _common(p)
    p.add_argument("--model")
    p.add_argument("--policy", action="append", default=[])
    p.add_argument("--class", dest="policy_class")

    p = sub.add_parser("simulate", help="sampling stage: write a dataset of behavior histories")
    _common(p)
    p.add_argument("--n", type=int)

    p = sub.add_parser("estimate", help="estimation stage: value of a target policy from a dataset")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--target")
    p.add_argument("--estimator", choices=["is", "wis", "crude", "all"], default="is")

    p = sub.add_parser("bounds", help="deviation radii and sample sizes")
    _common(p)
    for flag, typ in [("--v-max", float), ("--eta", float), ("--delta", float), ("--n", int), ("--eps", float),
                      ("--horizon", int), ("--entropy", float), ("--vc-dim", int), ("--c-floor", float),
                      ("--num-actions", int), ("--k1", float), ("--k2", float)]:
        p.add_argument(flag, type=typ)

    for name, helptext in [("coverage", "empirical coverage of the deviation bounds"),
                           ("compare-estimators", "replicated bias/variance of all estimators"),
                           ("oracle", "exact values and variances by enumeration")]:
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--n", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--delta", type=float)
        p.add_argument("--workers", type=int)

    p = sub.add_parser("compare-bounds", help="sample-size formulas side by side over a grid")
    _common(p)

    p = sub.add_parser("srm", help="choose among policy classes by pessimistic value")
    _common(p)
    p.add_argument("--n", type=int, action="append", help="sample size (repeatable)")
    p.add_argument("--delta", type=float)
    return parser


# ------------------------------------------------------------------ helpers


def _emit(args, kind, columns, rows):
    text = fm.render_report(kind, columns, rows, args.format)
    out = args.output
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args) -> dict:
    return fm.load_config(args.config) if args.config else {"format_version": fm.FORMAT_VERSION, "_base": "."}


def _pick(args, cfg, name, key=None, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(key or name, default)


def _experiment(args, cfg) -> ex.ExperimentConfig:
    base = cfg["_base"]
    if "model" not in cfg:
        raise UsageError("config needs a model")
    model = fm.resolve(cfg["model"], fm.load_model, fm.model_from_dict, base)
    ret = cfg.get("return", {"kind": "finite_horizon", "horizon": ex.DEFAULT_HORIZON})
    spec = fm.return_spec_from_dict(ret, model.r_max)
    if "behavior" in cfg:
        behavior = fm.resolve(cfg["behavior"], fm.load_policy, fm.policy_from_dict, base)
    else:
        behavior = Policy.uniform(model.num_observations, model.num_actions)
    target = fm.resolve(cfg["target"], fm.load_policy, fm.policy_from_dict, base) if "target" in cfg else None
    tclass = fm.resolve(cfg["target_class"], fm.load_class, fm.class_from_dict, base) if "target_class" in cfg else None
    mixture = [(fm.resolve(c["policy"], fm.load_policy, fm.policy_from_dict, base), c["prior"])
               for c in cfg.get("mixture", [])]
    kw = dict(
        model=model, behavior=behavior, spec=spec, target=target, target_class=tclass, mixture=mixture,
        n=_pick(args, cfg, "n", default=200), m=_pick(args, cfg, "m", default=1000),
        epsilon=cfg.get("epsilon"), delta=_pick(args, cfg, "delta", default=0.1),
        variant=cfg.get("variant", bd.PAPER_FORM), master_seed=_pick(args, cfg, "seed", "master_seed", 0),
        v_max=cfg.get("v_max"), eta=cfg.get("eta"),
        replications=cfg.get("replications", 500), workers=_pick(args, cfg, "workers", default=1),
        dataset_path=cfg.get("dataset"),
    )
    if "schedule" in cfg:
        kw["schedule"] = tuple(cfg["schedule"])
    return ex.ExperimentConfig(**kw)


# ---------------------------------------------------------------- commands


def cmd_validate(args):
    checked = []
    cfg = None
    if args.config:
        cfg = _config(args)
        checked.append(args.config)
    model = fm.load_model(args.model) if args.model else None
    if args.model:
        checked.append(args.model)
    for p in args.policy:
        pol = fm.load_policy(p)
        if model is not None and (pol.num_observations, pol.num_actions) != (model.num_observations, model.num_actions):
            raise ModelError(f"{p}: policy dimensions do not match model")
        checked.append(p)
    if args.policy_class:
        fm.load_class(args.policy_class)
        checked.append(args.policy_class)
    if cfg is not None and "model" in cfg:
        _experiment(args, cfg)
    if not checked:
        raise UsageError("nothing to validate")
    for c in checked:
        print(f"ok {c}", file=sys.stderr)


def cmd_simulate(args):
    cfg = _config(args)
    conf = _experiment(args, cfg)
    out = args.output or conf.dataset_path
    if not out:
        raise UsageError("simulate needs --output or a dataset path in the config")
    from .estimators import sample_set

    fm.write_dataset(sample_set(conf.model, conf.behavior, conf.spec, conf.n, conf.master_seed), out)


ESTIMATE_COLUMNS = ["estimator_kind", "value", "std_error", "n_samples", "weight_min", "weight_max",
                    "weight_mean", "target", "behavior_policy_id", "master_seed"]


def cmd_estimate(args):
    cfg = _config(args)
    dataset = args.dataset or cfg.get("dataset")
    target_ref = args.target or cfg.get("target")
    if not dataset or not target_ref:
        raise UsageError("estimate needs --dataset and --target")
    samples = fm.read_dataset(dataset)
    target = fm.resolve(target_ref, fm.load_policy, fm.policy_from_dict, "." if args.target else cfg["_base"])
    kinds = ["crude", "is", "wis"] if args.estimator == "all" else [args.estimator]
    rows = []
    for k in kinds:
        e = {"is": lambda: is_estimate(samples, target), "wis": lambda: wis_estimate(samples, target),
             "crude": lambda: crude_estimate(samples.returns)}[k]()
        rows.append({"estimator_kind": e.estimator_kind, "value": e.value, "std_error": e.std_error,
                     "n_samples": e.n_samples, "weight_min": e.weight_min, "weight_max": e.weight_max,
                     "weight_mean": e.weight_mean, "target": target.name or str(target_ref),
                     "behavior_policy_id": samples.behavior_policy_id, "master_seed": samples.master_seed})
    _emit(args, "estimate", ESTIMATE_COLUMNS, rows)


BOUNDS_COLUMNS = ["name", "quantity", "value", "formula_variant", "v_max", "eta", "delta", "n", "eps",
                  "horizon", "entropy", "vc_dim", "c_floor", "k1", "k2"]


def bound_rows(b: dict) -> list:
    """Every bound computable from the supplied inputs, one self-describing row each."""
    horizon = b.get("horizon", 1)
    c_floor = b.get("c_floor", 0.0)
    eta = b.get("eta")
    if eta is None:
        eta = eta_bound(horizon, c_floor, b.get("num_actions", 2))
    entropy = b.get("entropy", 0.0)
    ent = fm.entropy_from_value(entropy, horizon)
    inputs = bd.BoundInputs(b.get("v_max", 1.0), eta, b.get("delta", 0.05), horizon, ent, b.get("vc_dim"), c_floor)
    echo = {"v_max": inputs.v_max, "eta": eta, "delta": inputs.delta, "n": b.get("n"), "eps": b.get("eps"),
            "horizon": horizon, "entropy": entropy if not isinstance(entropy, dict) else str(entropy),
            "vc_dim": inputs.vc_dim, "c_floor": c_floor, "k1": b.get("k1"), "k2": b.get("k2")}
    rows = [{"name": "likelihood_ratio_bound", "quantity": "eta", "value": eta, "formula_variant": bd.PAPER_FORM}]
    n, eps = b.get("n"), b.get("eps")
    if n is not None:
        rows.append({"name": "single_policy", "quantity": "epsilon", "formula_variant": bd.PAPER_FORM,
                     "value": bd.single_policy_epsilon(inputs, n, bd.PAPER_FORM)})
        rows.append({"name": "single_policy", "quantity": "epsilon", "formula_variant": bd.EXACT_FORM,
                     "value": bd.single_policy_epsilon(inputs, n, bd.EXACT_FORM)})
        rows.append({"name": "uniform", "quantity": "epsilon", "formula_variant": bd.EXACT_FORM,
                     "value": bd.uniform_epsilon(inputs, n)})
    if eps is not None:
        rows.append({"name": "uniform", "quantity": "sample_size", "formula_variant": bd.EXACT_FORM,
                     "value": bd.uniform_sample_size(inputs, eps)})
        rows.append({"name": "uniform", "quantity": "sample_size", "formula_variant": bd.BIG_O,
                     "value": bd.uniform_sample_size_big_o(inputs, eps)})
        rows.append({"name": "mcdiarmid", "quantity": "sample_size", "formula_variant": bd.BIG_O,
                     "value": bd.mcdiarmid_sample_size(inputs, eps)})
        if inputs.vc_dim is not None and horizon >= 2:
            rows.append({"name": "kearns", "quantity": "sample_size", "formula_variant": bd.BIG_O,
                         "value": bd.kearns_sample_size(inputs.v_max / eps, horizon, inputs.vc_dim, inputs.delta)})
    k1 = b.get("k1")
    if k1 is not None:
        r = bd.parametric_regret(k1, horizon)
        rows.append({"name": "parametric", "quantity": "regret", "formula_variant": bd.BIG_O, "value": r})
        rows.append({"name": "parametric", "quantity": "eta", "formula_variant": bd.BIG_O,
                     "value": bd.eta_from_regret(r)})
        if eps is not None:
            rows.append({"name": "parametric", "quantity": "sample_size", "formula_variant": bd.BIG_O,
                         "value": bd.parametric_sample_size(inputs.v_max, eps, k1, inputs.log_n(eps),
                                                            inputs.delta, horizon)})
        if b.get("k2") is not None:
            prof = EntropyProfile(k1=k1, k2=b["k2"], horizon=horizon)
            rows.append({"name": "covering_regret", "quantity": "regret", "formula_variant": bd.EXACT_FORM,
                         "value": bd.regret_bound(prof)})
    return [{**echo, **r} for r in rows]


def cmd_bounds(args):
    cfg = _config(args)
    b = dict(cfg.get("bounds", {}))
    for flag, key in [("v_max", "v_max"), ("eta", "eta"), ("delta", "delta"), ("n", "n"), ("eps", "eps"),
                      ("horizon", "horizon"), ("entropy", "entropy"), ("vc_dim", "vc_dim"),
                      ("c_floor", "c_floor"), ("num_actions", "num_actions"), ("k1", "k1"), ("k2", "k2")]:
        v = getattr(args, flag)
        if v is not None:
            b[key] = v
    _emit(args, "bounds", BOUNDS_COLUMNS, bound_rows(b))


def cmd_coverage(args):
    conf = _experiment(args, _config(args))
    res = ex.coverage_experiment(conf)
    _emit(args, "coverage", ex.COVERAGE_COLUMNS, ex.coverage_rows(conf, res))


def cmd_compare_estimators(args):
    conf = _experiment(args, _config(args))
    _emit(args, "compare-estimators", ex.COMPARISON_COLUMNS, ex.estimator_comparison(conf))


def cmd_compare_bounds(args):
    cfg = _config(args)
    rows = ex.bound_comparison(cfg.get("grid"))
    _emit(args, "compare-bounds", ex.BOUND_COLUMNS, rows)


ORACLE_COLUMNS = ["quantity", "value", "target", "behavior", "n", "horizon", "return_kind"]


def cmd_oracle(args):
    conf = _experiment(args, _config(args))
    if conf.target is None:
        raise UsageError("oracle needs a target policy")
    m, t, b, s = conf.model, conf.target, conf.behavior, conf.spec
    common = {"target": t.name, "behavior": b.name, "n": conf.n, "horizon": s.horizon, "return_kind": s.kind}
    rows = [
        {"quantity": "exact_value", "value": exact_value(m, t, s)},
        {"quantity": "is_expectation", "value": is_expectation_exact(m, t, b, s)},
        {"quantity": "is_variance", "value": is_variance_exact(m, t, b, s, conf.n)},
        {"quantity": "ratio_bound", "value": ex.ratio_bound([t], b, s.horizon)},
        {"quantity": "behavior_value", "value": exact_value(m, b, s)},
    ]
    _emit(args, "oracle", ORACLE_COLUMNS, [{**common, **r} for r in rows])


SRM_COLUMNS = ["n", "id", "estimate", "epsilon", "lower_bound", "chosen", "delta", "v_max", "eta", "horizon"]


def cmd_srm(args):
    cfg = _config(args)
    s = cfg.get("srm")
    if not s or not s.get("classes"):
        raise UsageError("srm needs an 'srm' section with classes")
    horizon = s.get("horizon", 1)
    classes = []
    for c in s["classes"]:
        ent = c.get("entropy", 0.0)
        if isinstance(ent, dict) and "class" in ent:
            ent = EntropyProfile.from_class(fm.resolve(ent["class"], fm.load_class, fm.class_from_dict, cfg["_base"]))
        else:
            ent = fm.entropy_from_value(ent, horizon)
        classes.append((c["id"], ent, float(c["estimate"])))
    delta = args.delta if args.delta is not None else s.get("delta", 0.1)
    shared = bd.BoundInputs(s.get("v_max", 1.0), s.get("eta", 1.0), delta, horizon)
    ns = args.n or s.get("n") or [1000]
    ns = ns if isinstance(ns, list) else [ns]
    rows = []
    for n in ns:
        ch = bd.srm_select(classes, n, delta, shared)
        for (cid, _, v), e, l in zip(classes, ch.epsilons, ch.lower_bounds):
            rows.append({"n": n, "id": cid, "estimate": v, "epsilon": e, "lower_bound": l,
                         "chosen": cid == ch.chosen, "delta": delta, "v_max": shared.v_max,
                         "eta": shared.eta, "horizon": horizon})
    _emit(args, "srm", SRM_COLUMNS, rows)


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "bounds": cmd_bounds,
    "coverage": cmd_coverage,
    "compare-estimators": cmd_compare_estimators,
    "compare-bounds": cmd_compare_bounds,
    "oracle": cmd_oracle,
    "srm": cmd_srm,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID
    try:
        COMMANDS[args.command](args)
    except (EnumerationCapError, bd.ConvergenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ModelError, bd.BoundError, EstimationError, UsageError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
