"""JSON file formats for models, policies, classes and configs; the dataset line
format; CSV/JSON report emission. Every file carries ``format_version``."""

from __future__ import annotations

import csv
import io
import json
import re
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema
import numpy as np

from .estimators import SampleSet
from .model import ModelError, Pomdp, ReturnSpec, validate_pomdp
from .policies import EntropyProfile, Policy, PolicyClass

FORMAT_VERSION = 1

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}
_version = {"const": FORMAT_VERSION}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["format_version", "num_states", "num_observations", "num_actions",
                 "initial_dist", "transition", "observation_fn", "reward", "r_max"],
    "additionalProperties": False,
    "properties": {
        "format_version": _version,
        "name": {"type": "string"},
        "num_states": {"type": "integer", "minimum": 1},
        "num_observations": {"type": "integer", "minimum": 1},
        "num_actions": {"type": "integer", "minimum": 1},
        "initial_dist": _vec,
        "transition": {"type": "array", "items": _mat, "minItems": 1},
        "observation_fn": _mat,
        "reward": _mat,
        "r_max": {"type": "number", "minimum": 0},
    },
}

POLICY_SCHEMA = {
    "type": "object",
    "required": ["kind", "num_observations"],
    "additionalProperties": False,
    "properties": {
        "format_version": _version,
        "name": {"type": "string"},
        "kind": {"enum": ["tabular_reactive", "finite_window", "softmax_parametric"]},
        "num_observations": {"type": "integer", "minimum": 1},
        "window": {"type": "integer", "minimum": 1},
        "floor": {"type": "number", "minimum": 0},
        "table": _mat,
        "params": _mat,
    },
}

CLASS_SCHEMA = {
    "type": "object",
    "required": ["format_version"],
    "additionalProperties": False,
    "properties": {
        "format_version": _version,
        "name": {"type": "string"},
        "kind": {"enum": ["explicit", "softmax_grid"]},
        "floor": {"type": "number", "minimum": 0},
        "contexts": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "members": {"type": "array", "items": POLICY_SCHEMA, "minItems": 1},
        "num_observations": {"type": "integer", "minimum": 1},
        "num_actions": {"type": "integer", "minimum": 1},
        "window": {"type": "integer", "minimum": 1},
        "low": _num,
        "high": _num,
        "steps": {"type": "integer", "minimum": 1},
    },
}

RETURN_SCHEMA = {
    "type": "object",
    "required": ["kind", "horizon"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["finite_horizon", "discounted"]},
        "horizon": {"type": "integer", "minimum": 1},
        "gamma": {"type": ["number", "null"]},
        "r_max": {"type": "number", "minimum": 0},
    },
}

_ref = {"anyOf": [{"type": "string"}, {"type": "object"}]}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["format_version"],
    "additionalProperties": False,
    "properties": {
        "format_version": _version,
        "model": _ref,
        "behavior": _ref,
        "target": _ref,
        "target_class": _ref,
        "mixture": {"type": "array", "items": {
            "type": "object", "required": ["policy", "prior"], "additionalProperties": False,
            "properties": {"policy": _ref, "prior": _num}}},
        "return": RETURN_SCHEMA,
        "n": {"type": "integer"},
        "m": {"type": "integer"},
        "epsilon": {"type": ["number", "null"]},
        "delta": _num,
        "variant": {"enum": ["paper_form", "exact_form"]},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "v_max": {"type": ["number", "null"]},
        "eta": {"type": ["number", "null"]},
        "schedule": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "replications": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "dataset": {"type": "string"},
        "output": {"type": "string"},
        "bounds": {"type": "object"},
        "grid": {"type": "object"},
        "srm": {"type": "object"},
    },
}


class FormatError(ModelError):
    pass


def _line_of(text: str, path: Sequence) -> int:
    """Best-effort line number of the deepest named key on ``path``."""
    line = 1
    for key in path:
        if isinstance(key, str):
            m = re.search(r'"%s"\s*:' % re.escape(key), text)
            if m:
                line = text.count("\n", 0, m.start()) + 1
    return line


def _parse(text: str, schema: dict, what: str, source: str = "<input>"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{source}:{e.lineno}: invalid JSON in {what}: {e.msg}") from None
    _check_schema(data, schema, what, source, text)
    return data


def _check_schema(data, schema, what, source, text=""):
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(data))
    if err is not None:
        loc = "/".join(str(p) for p in err.absolute_path) or "<root>"
        line = _line_of(text, list(err.absolute_path)) if text else "?"
        raise FormatError(f"{source}:{line}: {what} field {loc}: {err.message}")


def _read(path) -> str:
    return Path(path).read_text()


# -------------------------------------------------------------------- model


def model_from_dict(d: dict, source="<model>") -> Pomdp:
    _check_schema(d, MODEL_SCHEMA, "model", source)
    m = Pomdp(d["initial_dist"], d["transition"], d["observation_fn"], d["reward"], d["r_max"])
    dims = (m.num_states, m.num_observations, m.num_actions)
    if dims != (d["num_states"], d["num_observations"], d["num_actions"]):
        raise FormatError(f"{source}: declared sizes {(d['num_states'], d['num_observations'], d['num_actions'])} "
                          f"do not match tables {dims}")
    try:
        validate_pomdp(m)
    except ModelError as e:
        raise FormatError(f"{source}: {e}") from None
    return m


def model_to_dict(m: Pomdp) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "num_states": m.num_states,
        "num_observations": m.num_observations,
        "num_actions": m.num_actions,
        "initial_dist": m.initial_dist.tolist(),
        "transition": m.transition.tolist(),
        "observation_fn": m.observation_fn.tolist(),
        "reward": m.reward.tolist(),
        "r_max": m.r_max,
    }


def load_model(path) -> Pomdp:
    text = _read(path)
    return model_from_dict(_parse(text, MODEL_SCHEMA, "model", str(path)), str(path))


# ------------------------------------------------------------------ policies


def policy_from_dict(d: dict, source="<policy>") -> Policy:
    _check_schema(d, POLICY_SCHEMA, "policy", source)
    kind = d["kind"]
    floor = d.get("floor", 0.0)
    window = d.get("window", 1)
    name = d.get("name", "")
    try:
        if kind == "softmax_parametric":
            if "params" not in d:
                raise FormatError(f"{source}: softmax policy needs params")
            return Policy.softmax(d["params"], floor, d["num_observations"], window, name=name)
        if "table" not in d:
            raise FormatError(f"{source}: {kind} policy needs table")
        return Policy(np.asarray(d["table"], dtype=float), d["num_observations"], window, floor, kind, name=name)
    except FormatError:
        raise
    except ModelError as e:
        raise FormatError(f"{source}: {e}") from None


def policy_to_dict(p: Policy) -> dict:
    d = {"format_version": FORMAT_VERSION, "kind": p.kind, "num_observations": p.num_observations,
         "window": p.window, "floor": p.floor, "name": p.name}
    if p.kind == "softmax_parametric":
        d["params"] = p.params.tolist()
    else:
        d["table"] = p.probs.tolist()
    return d


def load_policy(path) -> Policy:
    text = _read(path)
    return policy_from_dict(_parse(text, POLICY_SCHEMA, "policy", str(path)), str(path))


def class_from_dict(d: dict, source="<class>") -> PolicyClass:
    _check_schema(d, CLASS_SCHEMA, "policy class", source)
    try:
        if d.get("kind", "explicit") == "softmax_grid":
            need = ["num_observations", "num_actions", "low", "high", "steps", "floor"]
            missing = [k for k in need if k not in d]
            if missing:
                raise FormatError(f"{source}: softmax_grid class missing {missing}")
            return PolicyClass.softmax_grid(d["num_observations"], d["num_actions"], d["low"], d["high"],
                                            d["steps"], d["floor"], d.get("window", 1), d.get("name", ""))
        if "members" not in d:
            raise FormatError(f"{source}: explicit class needs members")
        members = [policy_from_dict(m, f"{source}/members/{i}") for i, m in enumerate(d["members"])]
        return PolicyClass.of(members, d.get("floor"), d.get("contexts"), d.get("name", ""))
    except FormatError:
        raise
    except ModelError as e:
        raise FormatError(f"{source}: {e}") from None


def class_to_dict(c: PolicyClass) -> dict:
    return {"format_version": FORMAT_VERSION, "kind": "explicit", "name": c.name, "floor": c.floor,
            "contexts": list(c.contexts), "members": [policy_to_dict(m) for m in c.members]}


def load_class(path) -> PolicyClass:
    text = _read(path)
    return class_from_dict(_parse(text, CLASS_SCHEMA, "policy class", str(path)), str(path))


def return_spec_from_dict(d: dict, r_max: float) -> ReturnSpec:
    _check_schema(d, RETURN_SCHEMA, "return", "<return>")
    return ReturnSpec(d["kind"], d["horizon"], d.get("r_max", r_max), d.get("gamma"))


def entropy_from_value(v, horizon=None):
    """A number means constant K; an object is {"k1", "k2"} or {"eps", "log_n"}."""
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, dict):
        if "k1" in v:
            return EntropyProfile(k1=v["k1"], k2=v["k2"], horizon=v.get("horizon", horizon))
        return EntropyProfile(eps=tuple(v["eps"]), log_n=tuple(v["log_n"]))
    raise FormatError(f"cannot read entropy from {v!r}")


def load_config(path) -> dict:
    text = _read(path)
    cfg = _parse(text, CONFIG_SCHEMA, "config", str(path))
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def resolve(ref, loader, from_dict, base="."):
    """A config reference is either a path (relative to the config) or an inline object."""
    if isinstance(ref, dict):
        return from_dict(ref)
    p = Path(ref)
    if not p.is_absolute():
        p = Path(base) / p
    return loader(p)


# ------------------------------------------------------------------- dataset


def write_dataset(samples: SampleSet, path) -> None:
    """Header line, then one history per line. Floats use shortest round-trip repr."""
    spec = samples.spec
    header = {
        "format_version": FORMAT_VERSION,
        "record": "header",
        "behavior_policy_id": samples.behavior_policy_id,
        "master_seed": samples.master_seed,
        "n": len(samples),
        "return": {"kind": spec.kind, "horizon": spec.horizon, "gamma": spec.gamma, "r_max": spec.r_max},
    }
    with open(path, "w") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for i in range(len(samples)):
            rec = {
                "seed": None if samples.seeds is None else int(samples.seeds[i]),
                "observations": samples.observations[i].tolist(),
                "actions": samples.actions[i].tolist(),
                "rewards": samples.rewards[i].tolist(),
                "behavior_probs": samples.behavior_probs[i].tolist(),
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_dataset(path) -> SampleSet:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty dataset")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:1: invalid header: {e.msg}") from None
    if header.get("format_version") != FORMAT_VERSION or header.get("record") != "header":
        raise FormatError(f"{path}:1: not a version-{FORMAT_VERSION} dataset header")
    r = header["return"]
    spec = ReturnSpec(r["kind"], r["horizon"], r["r_max"], r["gamma"])
    cols = {k: [] for k in ("seed", "observations", "actions", "rewards", "behavior_probs")}
    for ln, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}:{ln}: invalid record: {e.msg}") from None
        for k in cols:
            if k not in rec:
                raise FormatError(f"{path}:{ln}: record missing {k}")
            cols[k].append(rec[k])
    if len(cols["actions"]) != header["n"]:
        raise FormatError(f"{path}: header says {header['n']} histories, found {len(cols['actions'])}")
    seeds = None if any(s is None for s in cols["seed"]) else np.asarray(cols["seed"], dtype=np.uint64)
    return SampleSet(
        observations=np.asarray(cols["observations"]),
        actions=np.asarray(cols["actions"]),
        rewards=np.asarray(cols["rewards"], dtype=float),
        behavior_probs=np.asarray(cols["behavior_probs"], dtype=float),
        spec=spec,
        behavior_policy_id=header["behavior_policy_id"],
        master_seed=header["master_seed"],
        seeds=seeds,
    )


# ------------------------------------------------------------------- reports


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def render_report(kind: str, columns: Sequence[str], rows: Iterable[dict], fmt: str = "csv") -> str:
    """CSV with a fixed header, or JSON with the same fields. Unknown keys are an error."""
    rows = list(rows)
    for r in rows:
        extra = set(r) - set(columns)
        if extra:
            raise ValueError(f"report {kind}: unexpected fields {sorted(extra)}")
    if fmt == "json":
        payload = {
            "format_version": FORMAT_VERSION,
            "report": kind,
            "columns": list(columns),
            "rows": [{c: _plain(r.get(c)) for c in columns} for r in rows],
        }
        return json.dumps(payload, indent=2, sort_keys=False, allow_nan=True) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["format_version", "report"] + list(columns))
    for r in rows:
        w.writerow([FORMAT_VERSION, kind] + [_cell(r.get(c)) for c in columns])
    return buf.getvalue()
