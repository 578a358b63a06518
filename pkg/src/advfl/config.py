"""JSON experiment configs: parsing, dotted overrides and validation.

A config has the sections ``instance``, ``algorithm``, ``adversary``,
``schedule``, ``seeds`` and ``output``.  Overrides (``KEY=VALUE`` with a dotted
key) are applied to the parsed document before validation.
"""

import copy
import json
import os
from pathlib import Path

import numpy as np

from . import adversary, datagen, engine, seeding
from .aggregation import CClipConfig, GMConfig
from .objectives import InnerSolver

SECTIONS = ("instance", "algorithm", "adversary", "schedule", "seeds", "output")

DEFAULTS = {
    "instance": {"kind": "quadratic", "M": 50, "d": 20, "L": 1.0, "G": 1.0, "sigma": 0.5, "seed": 100},
    "algorithm": {"name": "fedavg", "beta": 1.0, "s": 1, "K": 10, "T": 100, "buckets": 2},
    "adversary": {"kind": "none", "eps": 0.0},
    "schedule": {"kind": "constant", "eta0": 0.01, "gamma": 1.0},
    "seeds": {"master": 0},
    "output": {"tail_fraction": 0.5},
}


class ConfigError(ValueError):
    """Invalid or unreadable config; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


def load(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError("", f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("", f"{path} must hold a JSON object")
    doc.setdefault("_base", str(path.resolve().parent))
    return doc


def parse_value(text):
    """JSON if it parses, otherwise the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(doc, key, value):
    parts = key.split(".")
    if not all(parts):
        raise ConfigError(key, "malformed dotted key")
    node = doc
    for p in parts[:-1]:
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(key, f"{p!r} is not a section")
        node = nxt
    node[parts[-1]] = value


def get_path(doc, key):
    node = doc
    for p in key.split("."):
        if not isinstance(node, dict) or p not in node:
            raise KeyError(key)
        node = node[p]
    return node


def apply_overrides(doc, overrides):
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like KEY=VALUE")
        key, text = item.split("=", 1)
        set_path(doc, key.strip(), parse_value(text))
    return doc


def with_defaults(doc):
    unknown = set(doc) - set(SECTIONS) - {"_base"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], f"unknown section; expected one of {SECTIONS}")
    out = {}
    for sec in SECTIONS:
        given = doc.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError(sec, "section must be an object")
        base = copy.deepcopy(DEFAULTS[sec])
        if sec == "instance" and "path" in given:
            base = {}
        base.update(given)
        out[sec] = base
    if "_base" in doc:
        out["_base"] = doc["_base"]
    return out


def _num(sec, key, kind=float, lo=None, strict=False):
    field = f"{sec['_name']}.{key}"
    try:
        v = sec[key]
    except KeyError:
        raise ConfigError(field, "missing") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(field, f"expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(field, f"expected an integer, got {v!r}")
    v = kind(v)
    if lo is not None and (v <= lo if strict else v < lo):
        raise ConfigError(field, f"must be {'>' if strict else '>='} {lo}, got {v}")
    return v


def _section(doc, name):
    sec = dict(doc[name])
    sec["_name"] = name
    return sec


def build_instance(doc):
    sec = _section(doc, "instance")
    if "path" in sec:
        path = Path(sec["path"])
        if not path.is_absolute() and "_base" in doc:
            path = Path(doc["_base"]) / path
        if not path.is_file():
            raise ConfigError("instance.path", f"instance file not found: {path}")
        try:
            return datagen.FederationInstance.load(path)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError("instance.path", f"cannot load {path}: {exc}") from None
    kind = sec.get("kind")
    rng = seeding.stream(_num(sec, "seed", int, 0), "instance")
    if kind == "quadratic":
        return datagen.quadratic_family(
            _num(sec, "M", int, 1), _num(sec, "L", float, 0, True), _num(sec, "G", float, 0),
            _num(sec, "sigma", float, 0), rng, d=_num(sec, "d", int, 1))
    if kind == "synthetic":
        sec.setdefault("alpha", 1.0)
        sec.setdefault("beta", 1.0)
        return datagen.synthetic_ab(_num(sec, "alpha", float, 0), _num(sec, "beta", float, 0),
                                    _num(sec, "M", int, 1), rng)
    if kind == "lower-bound":
        which = sec.get("which", "heterogeneous")
        if which not in ("homogeneous", "heterogeneous"):
            raise ConfigError("instance.which", "expected homogeneous or heterogeneous")
        sec.setdefault("variant", "static")
        try:
            pair = datagen.lower_bound_pair(
                sec["variant"], _num(sec, "M", int, 1), _num(sec, "eps", float, 0),
                G=float(sec.get("G", 1.0)), sigma=float(sec.get("sigma", 1.0)),
                d=int(sec.get("d", 5)), mask_seed=int(sec.get("seed", 0)))
        except ValueError as exc:
            raise ConfigError("instance", str(exc)) from None
        return getattr(pair, which)
    raise ConfigError("instance.kind", f"expected quadratic, synthetic, lower-bound or a path, got {kind!r}")


def build_schedule(doc, instance, beta, s, K):
    sec = _section(doc, "schedule")
    kind = sec.get("kind")
    if kind == "nonconvex":
        eta0 = engine.nonconvex_eta0(instance.profile, beta, s, K / instance.M)
        return engine.Schedule("inv_sqrt", eta0)
    if kind == "strongly_convex":
        try:
            return engine.strongly_convex_schedule(instance.profile, beta, s,
                                                   float(sec.get("theta", 1.0)))
        except ValueError as exc:
            raise ConfigError("schedule.kind", str(exc)) from None
    if kind not in ("constant", "inv_sqrt", "inv_linear"):
        raise ConfigError("schedule.kind", f"unknown schedule {kind!r}")
    return engine.Schedule(kind, _num(sec, "eta0", float, 0, True), _num(sec, "gamma", float, 0, True))


def build_adversary(doc):
    sec = _section(doc, "adversary")
    kind = sec.get("kind")
    if kind not in ("none", "static", "random", "shadow", "oracle"):
        raise ConfigError("adversary.kind", f"unknown adversary {kind!r}")
    eps = _num(sec, "eps", float, 0)
    if eps >= 1:
        raise ConfigError("adversary.eps", f"must be < 1, got {eps}")
    shadow = sec.get("shadow", {})
    if not isinstance(shadow, dict):
        raise ConfigError("adversary.shadow", "must be an object")
    try:
        shadow_cfg = adversary.ShadowConfig(**shadow)
    except TypeError as exc:
        raise ConfigError("adversary.shadow", str(exc)) from None
    blocked = sec.get("blocked")
    return engine.AdversaryConfig(
        kind, eps, blocked=None if blocked is None else tuple(int(i) for i in blocked),
        keep_size=sec.get("keep_size"), mask_seed=sec.get("mask_seed"), shadow=shadow_cfg)


def build_run_config(doc, seed=None):
    """Validated ``engine.RunConfig`` from a full (defaulted) config document."""
    instance = build_instance(doc)
    alg = _section(doc, "algorithm")
    name = alg.get("name")
    if name not in engine.ALGORITHMS:
        raise ConfigError("algorithm.name", f"expected one of {engine.ALGORITHMS}, got {name!r}")
    beta = _num(alg, "beta", float, 0, True)
    s = _num(alg, "s", int, 1)
    K = _num(alg, "K", int, 1)
    T = _num(alg, "T", int, 1)
    if K > instance.M:
        raise ConfigError("algorithm.K", f"must be <= M={instance.M}, got {K}")
    try:
        cclip = CClipConfig(**alg.get("cclip", {}))
        gm = GMConfig(**alg.get("gm", {}))
        inner = InnerSolver(**alg.get("inner", {}))
    except TypeError as exc:
        raise ConfigError("algorithm", str(exc)) from None
    master = _num(_section(doc, "seeds"), "master", int, 0) if seed is None else int(seed)
    try:
        return engine.RunConfig(
            instance, name, beta=beta, s=s, schedule=build_schedule(doc, instance, beta, s, K),
            T=T, K=K, adversary=build_adversary(doc), seed=master, cclip=cclip, gm=gm,
            buckets=_num(alg, "buckets", int, 1), inner=inner)
    except ValueError as exc:
        raise ConfigError("", str(exc)) from None


def echo(doc):
    """Config as written to output files (defaults filled, no private keys)."""
    return {k: v for k, v in doc.items() if not k.startswith("_")}


def output_root(doc, cli_out=None):
    if cli_out:
        return Path(cli_out)
    if doc.get("output", {}).get("dir"):
        return Path(doc["output"]["dir"])
    return Path(os.environ.get("ADVFL_OUT_DIR", "runs"))


def seed_list(doc, cli_seed=None):
    if cli_seed is not None:
        return [int(cli_seed)]
    seeds = doc["seeds"].get("list")
    if seeds is None:
        return [int(doc["seeds"]["master"])]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds.list", "must be a non-empty list of integers")
    return [int(s) for s in seeds]


def jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")
