"""Run configuration: one JSON document, validated before anything runs.

Schema (all keys at the top level; per-command parameters live under
``params`` and can be overridden from the command line):

    {
      "dimension": 1 | 2,
      "grid": [256] | [64, 64],
      "seed": 12648430,                  # optional, default 0xC0FFEE
      "T": 1.0,                          # time horizon
      "system": {
        "kind": "preset" | "roots" | "companion" | "second_order",
        # preset:       "name": "glancing"|"strict"|"elliptic_gap",
        #               "coupling": 0.4
        # roots:        "roots": [expr...], "B": [[expr...]...],
        #               "exact_roots": [expr...]        (optional)
        # companion:    "m": 2|3, "roots": [...],
        #               "lower": {"1": expr, "1,2": expr...}, "c": expr
        # second_order: "b": expr, "c": expr, "mu": expr (optional)
      },
      "params": { ... }                  # command-specific, see README
    }

Expression strings use the symbol DSL; every tolerance and the resolved
seed are echoed into each artifact for reproducibility.
"""

from __future__ import annotations

import copy
import json

from .errors import ConfigError
from .grid import Grid
from .systems import (build_companion, build_second_order, elliptic_gap_system,
                      glancing_system, make_system, strict_2x2)

DEFAULT_SEED = 0xC0FFEE

_PRESETS = {
    "glancing": glancing_system,
    "strict": strict_2x2,
    "elliptic_gap": elliptic_gap_system,
}


def load_config(path):
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(raw)


def validate_config(raw):
    """Fill defaults and check the document against the schema."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(raw)
    n = cfg.get("dimension", 1)
    if n not in (1, 2):
        raise ConfigError("dimension must be 1 or 2")
    sizes = cfg.get("grid")
    if not isinstance(sizes, list) or len(sizes) != n:
        raise ConfigError(f"grid must be a list of {n} power-of-two sizes")
    cfg["dimension"] = n
    cfg.setdefault("seed", DEFAULT_SEED)
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    cfg.setdefault("T", 1.0)
    if not isinstance(cfg["T"], (int, float)) or cfg["T"] <= 0:
        raise ConfigError("T must be a positive number")
    system = cfg.get("system")
    if not isinstance(system, dict) or "kind" not in system:
        raise ConfigError("system object with a 'kind' is required")
    kind = system["kind"]
    if kind == "preset":
        if system.get("name") not in _PRESETS:
            raise ConfigError(
                f"preset name must be one of {sorted(_PRESETS)}")
    elif kind == "roots":
        if "roots" not in system or "B" not in system:
            raise ConfigError("roots system needs 'roots' and 'B'")
    elif kind == "companion":
        if "m" not in system or "roots" not in system:
            raise ConfigError("companion system needs 'm' and 'roots'")
    elif kind == "second_order":
        if "b" not in system or "c" not in system:
            raise ConfigError("second_order system needs 'b' and 'c'")
    else:
        raise ConfigError(f"unknown system kind {kind!r}")
    params = cfg.setdefault("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be an object")
    return cfg


def apply_overrides(cfg, pairs):
    """Apply ``key=value`` overrides with dotted paths into the config."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, val = pair.split("=", 1)
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError:
            parsed = val
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot descend into {part!r} in {key!r}")
        node[parts[-1]] = parsed
    return validate_config(cfg)


def build_system(cfg):
    """Instantiate the configured system; returns (SystemSpec, extras)."""
    n = cfg["dimension"]
    grid = Grid(tuple(cfg["grid"]))
    system = cfg["system"]
    kind = system["kind"]
    T = float(cfg["T"])
    extras = {}
    if kind == "preset":
        builder = _PRESETS[system["name"]]
        kwargs = {"T": T}
        if "coupling" in system:
            kwargs["coupling"] = float(system["coupling"])
        sys = builder(grid, **kwargs)
    elif kind == "roots":
        sys = make_system(system["roots"], system["B"], grid, T=T,
                          exact_root_texts=system.get("exact_roots"))
    elif kind == "companion":
        lower = {
            tuple(int(s) for s in key.split(",")): expr
            for key, expr in (system.get("lower") or {}).items()
        }
        comp = build_companion(int(system["m"]), system["roots"], grid,
                               lower=lower, c_text=system.get("c", "0"), T=T)
        sys = comp.system
        extras["companion"] = comp
    elif kind == "second_order":
        roots, matrix, report = build_second_order(
            system["b"], system["c"], grid, mu_text=system.get("mu"), T=T)
        extras["second_order_roots"] = roots
        extras["second_order_report"] = report
        mu_t = system.get("mu", "0")
        plus = f"(-({system['b']})+({mu_t}))/2"
        minus = f"(-({system['b']})-({mu_t}))/2"
        cpl = str(float(system.get("coupling", 0.4)))
        sys = make_system([plus, minus], [["0", cpl], [cpl, "0"]], grid, T=T)
    else:  # pragma: no cover - validate_config guards this
        raise ConfigError(kind)
    return sys, extras
