"""Experiment configuration: 'key = value' text files with typed parsing
and range validation (no wall-clock defaults anywhere; seeds are explicit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

NEG_INF = float("-inf")

# schema entries: name -> (type tag, required, default)
_OPT = object()

SCHEMAS: dict[str, dict[str, tuple]] = {
    "green-validate": {
        "n": ("int", True, None), "d": ("int", True, None), "seed": ("int", True, None),
        "dump_covariance": ("bool", False, False),
    },
    "sampler-validate": {
        "n": ("int", True, None), "d": ("int", True, None), "seed": ("int", True, None),
        "replicas": ("int", True, None), "k_max": ("int", False, None),
    },
    "tree-eta": {
        "d": ("int", True, None), "h": ("float", True, None),
        "p": ("float", False, 1.0), "gamma": ("float", False, NEG_INF),
        "depth": ("int", True, None), "replicas": ("int", True, None),
        "seed": ("int", True, None),
    },
    "operator-sweep": {
        "d": ("int", True, None), "h_grid": ("float_list", True, None),
        "p": ("float", False, 1.0), "gamma": ("float", False, NEG_INF),
        "n_nodes": ("int", False, 256),
    },
    "hstar": {
        "d": ("int", True, None), "tol": ("float", False, 1e-4),
        "n_nodes": ("int", False, 256),
    },
    "coupling-tail": {
        "n": ("int", True, None), "d": ("int", True, None),
        "r_grid": ("int_list", True, None), "replicas": ("int", True, None),
        "seed": ("int", True, None), "k_max": ("int", False, None),
        "eps_grid": ("float_list", False, (0.5, 1.0, 2.0, 3.0)),
    },
    "giant": {
        "n": ("int", True, None), "d": ("int", True, None), "h": ("float", True, None),
        "seeds": ("int", True, None), "seed": ("int", False, 0),
        "k_max": ("int", False, None),
    },
    "mesoscopic": {
        "n": ("int", True, None), "d": ("int", True, None), "h": ("float", True, None),
        "p": ("float", True, None), "t": ("float", True, None),
        "seeds": ("int", True, None), "seed": ("int", False, 0),
        "k_max": ("int", False, None),
    },
    "sprinkle": {
        "n_grid": ("int_list", True, None), "d": ("int", True, None),
        "h": ("float", True, None), "h_prime": ("float", True, None),
        "p": ("float", True, None), "replicas": ("int", True, None),
        "seed": ("int", False, 0), "t": ("float", False, None),
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.params.get(key, default)


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("inf", "+inf", "-inf"):
        return float(low)
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return tuple(_parse_scalar(tok.strip()) for tok in text.split(",") if tok.strip())
    return _parse_scalar(text)


def load_config(path) -> ExperimentConfig:
    """Read a 'key = value' file; a line 'experiment = <name>' selects the
    experiment (the CLI positional argument overrides it)."""
    params = {}
    experiment = ""
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key == "experiment":
                experiment = value.strip()
            else:
                params[key] = parse_value(value)
    return ExperimentConfig(experiment, params)


def _coerce(tag: str, value):
    if tag == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError("expected an integer")
        return value
    if tag == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError("expected a number")
        return float(value)
    if tag == "bool":
        if not isinstance(value, bool):
            raise ValueError("expected true/false")
        return value
    if tag in ("int_list", "float_list"):
        items = value if isinstance(value, tuple) else (value,)
        out = []
        for item in items:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ValueError("expected a list of numbers")
            if tag == "int_list" and int(item) != item:
                raise ValueError("expected integers")
            out.append(int(item) if tag == "int_list" else float(item))
        return tuple(out)
    raise AssertionError(tag)


def validate(config: ExperimentConfig) -> list[str]:
    """Schema and range report; empty list means the config can run."""
    problems = []
    name = config.experiment
    if name not in SCHEMAS:
        return [f"unknown experiment {name!r}; choose from {sorted(SCHEMAS)}"]
    schema = SCHEMAS[name]
    params = dict(config.params)
    for key, (tag, required, default) in schema.items():
        if key not in params:
            if required:
                problems.append(f"missing required parameter '{key}'")
            continue
        try:
            params[key] = _coerce(tag, params[key])
        except ValueError as exc:
            problems.append(f"parameter '{key}': {exc}")
    for key in params:
        if key not in schema:
            problems.append(f"unknown parameter '{key}' for experiment {name}")
    if problems:
        return problems

    def has(k):
        return k in params

    d = params.get("d")
    if d is not None and d < 3:
        problems.append("d must be at least 3")
    n_values = [params["n"]] if has("n") else list(params.get("n_grid", ()))
    for n in n_values:
        if d is not None and n < d + 1:
            problems.append(f"n={n} too small for degree {d}")
        if d is not None and (n * d) % 2 != 0:
            problems.append(f"parity: n*d = {n * d} is odd")
    for key in ("p",):
        if has(key) and not 0.0 <= params[key] <= 1.0:
            problems.append(f"{key} = {params[key]} out of [0, 1]")
    if name in ("mesoscopic", "sprinkle") and has("p") and not 0.5 < params["p"] <= 1.0:
        problems.append("reduced-graph mark probability p must lie in (1/2, 1]")
    if has("t") and params["t"] is not None and not 0.0 <= params["t"] < 1.0:
        problems.append(f"t = {params['t']} out of [0, 1)")
    if has("gamma") and params["gamma"] > 0.0:
        problems.append("gamma must be <= 0 (or -inf)")
    if has("depth") and params["depth"] < 5:
        problems.append("depth must be at least 5")
    if has("replicas") and params["replicas"] < 1:
        problems.append("replicas must be positive")
    if has("seeds") and params["seeds"] < 1:
        problems.append("seeds must be positive")
    if has("n_nodes") and params["n_nodes"] < 32:
        problems.append("n_nodes must be at least 32")
    if has("tol") and not 0 < params["tol"] < 1:
        problems.append("tol must lie in (0, 1)")
    if name == "sprinkle" and not params["h"] < params["h_prime"]:
        problems.append("need h < h_prime")
    if has("r_grid") and any(r < 1 for r in params["r_grid"]):
        problems.append("coupling radii must be >= 1")
    if has("h_grid") and len(params["h_grid"]) < 1:
        problems.append("h_grid must be nonempty")
    return problems


def resolved_params(config: ExperimentConfig) -> dict:
    """Parameters with schema defaults filled in (call after validate)."""
    schema = SCHEMAS[config.experiment]
    out = {}
    for key, (tag, required, default) in schema.items():
        if key in config.params:
            out[key] = _coerce(tag, config.params[key])
        else:
            out[key] = default
    return out
