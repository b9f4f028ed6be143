"""Pipeline configuration: YAML file merged over documented defaults.

Validation collects every violation before failing so a user can fix a
config in one pass.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from pathlib import Path

import yaml

from .predict.crossval import MODEL_NAMES
from .synth import SynthConfig, SynthError


def _synth_defaults():
    d = {f.name: f.default if f.default is not dataclasses.MISSING else f.default_factory()
         for f in dataclasses.fields(SynthConfig) if f.name != "seed"}
    d["transitions"] = [list(r) for r in d["transitions"]]
    return d


def synth_config(cfg) -> SynthConfig:
    s = dict(cfg["synth"])
    s["transitions"] = tuple(tuple(r) for r in s["transitions"])
    return SynthConfig(seed=cfg["seed"], **s)


DEFAULTS = {
    "seed": 42,
    "out": "run",
    "inputs": None,  # {activities, locations, glucose, purchases} paths; None means synthesise
    "synth": _synth_defaults(),
    "grid": {"t0": None, "t_end": None, "slot_width_s": 15},
    "impute": {"k": 20, "learning_rate": 0.5, "epochs": 25, "batch_size": 256, "l2": 0.0,
               "holdout_fraction": 0.2},
    "cluster": {"threshold": 0.8, "eps_m": 30.0, "min_pts": 20, "tags_file": None, "auto_tags": True,
                "max_active": 20, "link_m": 1000.0, "buffer_m": 200.0},
    "events": {"bandwidth_s": 7200, "min_separation_s": 7200, "min_density": 0.5, "window_s": 7200},
    "correlate": {"threshold_mgdl": 30.0, "max_lag_min": 180},
    "predict": {"lags": 12, "horizons": [15, 30, 60], "models": list(MODEL_NAMES), "folds": 5,
                "params": {"lasso": {"lambda": 1.0}, "ridge": {"lambda": 1.0},
                           "enet": {"alpha": 1.0, "lambda": 0.5}, "tv": {"lambda": 1.0},
                           "kernel": {"learning_rate": 0.2, "epochs": 40, "batch_size": 64, "l2": 0.0}}},
}
INPUT_KEYS = ("activities", "locations", "glucose", "purchases")
_KERNEL_KEYS = {"learning_rate", "epochs", "batch_size", "seed", "l2"}
PARAM_KEYS = {"static": set(), "ols": set(), "lasso": {"lambda"}, "ridge": {"lambda"}, "tv": {"lambda"},
              "enet": {"alpha", "lambda"}, "kernel": _KERNEL_KEYS, "kernel_exog": _KERNEL_KEYS}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.errors))


def _merge(base, over, path, errors):
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            errors.append(f"{where}: unknown key")
        elif isinstance(base[k], dict) and k not in ("params", "missingness"):
            if not isinstance(v, dict):
                errors.append(f"{where}: expected a mapping")
            else:
                out[k] = _merge(base[k], v, where, errors)
        elif k == "missingness":
            if not isinstance(v, dict):
                errors.append(f"{where}: expected a mapping")
            else:
                out[k] = {**base[k], **v}
        elif k == "params":
            if not isinstance(v, dict):
                errors.append(f"{where}: expected a mapping")
            else:
                for name, p in v.items():
                    out[k].setdefault(name, {}).update(p or {})
        else:
            out[k] = v
    return out


def _check(errors, cond, msg):
    if not cond:
        errors.append(msg)


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def validate(cfg, base_dir=Path(".")):
    e = []
    _check(e, _int(cfg["seed"]), "seed: must be an integer")
    if cfg["inputs"] is not None:
        if not isinstance(cfg["inputs"], dict):
            e.append("inputs: expected a mapping of stream name to CSV path")
        else:
            for k in INPUT_KEYS:
                p = cfg["inputs"].get(k)
                if p is None:
                    e.append(f"inputs.{k}: missing")
                elif not (base_dir / p).is_file():
                    e.append(f"inputs.{k}: file {p} does not exist")
            for k in set(cfg["inputs"]) - set(INPUT_KEYS):
                e.append(f"inputs.{k}: unknown key")
    try:
        synth_config(cfg)
    except SynthError as exc:
        e.extend(f"synth: {m}" for m in str(exc).split("; "))
    except (TypeError, ValueError) as exc:
        e.append(f"synth: {exc}")
    g = cfg["grid"]
    _check(e, _int(g["slot_width_s"]) and g["slot_width_s"] > 0 and 300 % g["slot_width_s"] == 0,
           "grid.slot_width_s: positive integer dividing 300")
    for k in ("t0", "t_end"):
        _check(e, g[k] is None or _int(g[k]), f"grid.{k}: integer epoch seconds or null")
    if _int(g["t0"]) and _int(g["t_end"]):
        _check(e, g["t0"] < g["t_end"], "grid: t0 must precede t_end")
    im = cfg["impute"]
    _check(e, _int(im["k"]) and im["k"] >= 1, "impute.k: integer >= 1")
    _check(e, _num(im["learning_rate"]) and im["learning_rate"] > 0, "impute.learning_rate: > 0")
    _check(e, _int(im["epochs"]) and im["epochs"] > 0, "impute.epochs: integer > 0")
    _check(e, _int(im["batch_size"]) and im["batch_size"] > 0, "impute.batch_size: integer > 0")
    _check(e, _num(im["l2"]) and im["l2"] >= 0, "impute.l2: >= 0")
    _check(e, _num(im["holdout_fraction"]) and 0 < im["holdout_fraction"] < 1, "impute.holdout_fraction: in (0, 1)")
    c = cfg["cluster"]
    _check(e, _num(c["threshold"]) and 0 <= c["threshold"] <= 1, "cluster.threshold: in [0, 1]")
    _check(e, _num(c["eps_m"]) and c["eps_m"] > 0, "cluster.eps_m: > 0")
    _check(e, _int(c["min_pts"]) and c["min_pts"] >= 1, "cluster.min_pts: integer >= 1")
    _check(e, _int(c["max_active"]) and c["max_active"] >= 2, "cluster.max_active: integer >= 2")
    _check(e, _num(c["link_m"]) and c["link_m"] >= 0, "cluster.link_m: >= 0")
    _check(e, _num(c["buffer_m"]) and c["buffer_m"] >= 0, "cluster.buffer_m: >= 0")
    if c["tags_file"] is not None:
        _check(e, (base_dir / c["tags_file"]).is_file(), f"cluster.tags_file: file {c['tags_file']} does not exist")
    ev = cfg["events"]
    for k in ("bandwidth_s", "window_s"):
        _check(e, _num(ev[k]) and ev[k] > 0, f"events.{k}: > 0")
    _check(e, _num(ev["min_separation_s"]) and ev["min_separation_s"] >= 0, "events.min_separation_s: >= 0")
    _check(e, _num(ev["min_density"]) and ev["min_density"] >= 0, "events.min_density: >= 0")
    _check(e, _int(ev["window_s"]) and ev["window_s"] % 300 == 0, "events.window_s: multiple of 300")
    co = cfg["correlate"]
    _check(e, _num(co["threshold_mgdl"]), "correlate.threshold_mgdl: number")
    _check(e, _int(co["max_lag_min"]) and co["max_lag_min"] >= 0 and co["max_lag_min"] % 5 == 0,
           "correlate.max_lag_min: non-negative multiple of 5")
    p = cfg["predict"]
    _check(e, _int(p["lags"]) and p["lags"] >= 1, "predict.lags: integer >= 1")
    _check(e, _int(p["folds"]) and p["folds"] >= 2, "predict.folds: integer >= 2")
    hz = p["horizons"]
    _check(e, isinstance(hz, list) and hz and all(_int(h) and h > 0 and h % 5 == 0 for h in hz),
           "predict.horizons: non-empty list of positive multiples of 5 minutes")
    ms = p["models"]
    if not (isinstance(ms, list) and ms):
        e.append("predict.models: non-empty list")
    else:
        for m in ms:
            _check(e, m in MODEL_NAMES, f"predict.models: unknown model {m!r}")
    for name, params in p["params"].items():
        if name not in MODEL_NAMES:
            e.append(f"predict.params.{name}: unknown model")
            continue
        for k, v in (params or {}).items():
            if k not in PARAM_KEYS[name]:
                e.append(f"predict.params.{name}.{k}: unknown hyperparameter")
                continue
            if k in ("epochs", "batch_size", "seed"):
                _check(e, _int(v) and v > 0 or (k == "seed" and _int(v)), f"predict.params.{name}.{k}: positive integer")
            else:
                _check(e, _num(v) and v >= 0, f"predict.params.{name}.{k}: number >= 0")
            if k == "learning_rate":
                _check(e, _num(v) and v > 0, f"predict.params.{name}.learning_rate: > 0")
    return e


def load(path, overrides=None):
    """Read, merge and validate; raises ConfigError listing every problem."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file {path} does not exist"])
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from None
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    errors = []
    cfg = _merge(DEFAULTS, raw, "", errors)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    errors += validate(cfg, path.parent)
    if errors:
        raise ConfigError(errors)
    cfg["_base_dir"] = str(path.parent.resolve())
    return cfg


def digest(cfg) -> str:
    """Hash of the effective configuration, independent of where it was read from."""
    clean = {k: v for k, v in cfg.items() if not k.startswith("_") and k != "out"}
    return hashlib.sha256(json.dumps(clean, sort_keys=True).encode()).hexdigest()
