"""Experiment configuration files (YAML).

Every validation error names the file and the line of the offending entry,
e.g. ``one_dim.yaml:14: N must be a positive integer``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigurationError
from .marginals import get_marginal
from .schedule_theory import PilotConfig, TemperatureSchedule, composite_schedule, geometric_schedule
from .target_model import GaussianMixtureTarget, ProductMarginalTarget

_RUN_KEYS = {
    "name", "target", "schedule", "algorithm", "N", "pt_schemes", "k", "T", "quanta_levels", "K",
    "refine", "seed", "out", "thin", "record", "repeats", "burn_in", "start", "bands",
    "weight_mode", "weight_scheme", "scales", "adapt",
}


class _Source:
    """Parsed YAML plus node marks for line-precise messages."""

    def __init__(self, text, path="<config>"):
        self.path = path
        try:
            self.node = yaml.compose(text)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else 0
            raise ConfigurationError(f"{path}:{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
        if not isinstance(self.data, dict):
            raise ConfigurationError(f"{path}:1: top level must be a mapping")

    def line(self, *keys):
        node, line = self.node, 1
        for key in keys:
            if isinstance(node, yaml.MappingNode):
                for k_node, v_node in node.value:
                    if k_node.value == str(key):
                        node, line = v_node, k_node.start_mark.line + 1
                        break
                else:
                    return line
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
                line = node.start_mark.line + 1
            else:
                return line
        return line

    def error(self, msg, *keys):
        return ConfigurationError(f"{self.path}:{self.line(*keys)}: {msg}")


def _get(src, block, key, kind, default=..., check=None, msg=None, path=()):
    if key not in block:
        if default is ...:
            raise src.error(f"missing required key '{key}'", *path)
        return default
    val = block[key]
    try:
        if kind is int and (isinstance(val, bool) or not float(val).is_integer()):
            raise ValueError
        val = kind(val)
    except (TypeError, ValueError):
        raise src.error(f"'{key}' must be of type {kind.__name__}", *path, key) from None
    if check is not None and not check(val):
        raise src.error(msg or f"invalid value for '{key}': {val!r}", *path, key)
    return val


@dataclass
class ExperimentConfig:
    """A validated ``run`` configuration. See ``docs`` in the README for the schema."""

    name: str
    target: object
    schedule: Optional[TemperatureSchedule]
    algorithms: list
    N: int = 100
    pt_schemes: int = 1
    k: int = 3
    T: int = 20000
    quanta_levels: Optional[list] = None
    K: int = 1
    refine: Optional[bool] = None
    seed: int = 0
    out: str = "runs"
    thin: int = 1
    record: str = "first"
    repeats: int = 1
    burn_in: Optional[int] = None
    start: object = 0.0
    bands: Optional[list] = None
    weight_mode: int = -1
    weight_scheme: object = "random"
    scales: Optional[list] = None
    adapt: bool = True
    tune: Optional[PilotConfig] = None
    hottest_beta: Optional[float] = None
    raw: dict = field(default_factory=dict)


def build_target(src, block, path=("target",)):
    if not isinstance(block, dict):
        raise src.error("target must be a mapping", *path)
    family = block.get("family", "gaussian_mixture")
    dim = _get(src, block, "dimension", int, check=lambda v: v >= 1, msg="dimension must be >= 1", path=path)
    if family == "gaussian_mixture":
        means = block.get("means")
        if not isinstance(means, list) or not means:
            raise src.error("means must be a non-empty list", *path, "means")
        K = len(means)
        weights = block.get("weights", [1.0 / K] * K)
        sigmas = block.get("sigmas", block.get("sigma"))
        if sigmas is None:
            raise src.error("missing required key 'sigmas'", *path)
        try:
            return GaussianMixtureTarget(weights, means, sigmas if isinstance(sigmas, list) else [sigmas], dim)
        except ValueError as exc:
            raise src.error(str(exc), *path) from None
    if family == "product":
        try:
            return ProductMarginalTarget(get_marginal(block.get("marginal", "")), dim)
        except ConfigurationError as exc:
            raise src.error(str(exc), *path, "marginal") from None
    raise src.error(f"unknown target family {family!r} (use gaussian_mixture or product)", *path, "family")


def build_schedule(src, block, path=("schedule",)):
    """Returns ``(schedule or None, pilot or None, hottest_beta or None)``."""
    if not isinstance(block, dict):
        raise src.error("schedule must be a mapping", *path)
    kind = block.get("type", "geometric")
    try:
        if kind == "geometric":
            r = _get(src, block, "ratio", float, check=lambda v: 0 < v < 1,
                     msg="geometric ratio must lie in (0, 1)", path=path)
            n = _get(src, block, "levels", int, check=lambda v: v >= 1,
                     msg="levels must be at least 1", path=path)
            return geometric_schedule(r, n), None, None
        if kind == "composite":
            segs = block.get("segments")
            if not isinstance(segs, list) or not all(isinstance(s, list) for s in segs):
                raise src.error("segments must be a list of [ratio, count] pairs", *path, "segments")
            try:
                return composite_schedule([tuple(s) for s in segs]), None, None
            except ConfigurationError as exc:
                raise src.error(str(exc), *path, "segments") from None
        if kind == "explicit":
            betas = block.get("betas")
            if not isinstance(betas, list):
                raise src.error("betas must be a list", *path, "betas")
            return TemperatureSchedule(np.array(betas, dtype=float)), None, None
        if kind == "tuned":
            hot = _get(src, block, "hottest_beta", float, check=lambda v: 0 < v < 1,
                       msg="hottest_beta must lie in (0, 1)", path=path)
            pilot = block.get("pilot", {}) or {}
            try:
                pc = PilotConfig(**pilot)
            except TypeError as exc:
                raise src.error(f"bad pilot settings: {exc}", *path, "pilot") from None
            return None, pc, hot
    except ConfigurationError as exc:
        if str(exc).startswith(src.path):
            raise
        raise src.error(str(exc), *path) from None
    raise src.error(f"unknown schedule type {kind!r} (geometric, composite, explicit, tuned)", *path, "type")


def load_experiment(path, text=None):
    """Parse and validate a ``run`` config file."""
    text = open(path).read() if text is None else text
    src = _Source(text, str(path))
    d = src.data
    unknown = sorted(set(d) - _RUN_KEYS)
    if unknown:
        raise src.error(f"unknown key '{unknown[0]}'", unknown[0])
    for key in ("target", "schedule"):
        if key not in d:
            raise src.error(f"missing required block '{key}'")
    target = build_target(src, d["target"])
    schedule, pilot, hot = build_schedule(src, d["schedule"])

    algs = d.get("algorithm", "quanta")
    algs = [algs] if isinstance(algs, str) else algs
    if not isinstance(algs, list) or not algs or any(a not in ("pt", "quanta") for a in algs):
        raise src.error("algorithm must be 'pt', 'quanta' or a list of them", "algorithm")

    pos = lambda v: v >= 1  # noqa: E731
    cfg = ExperimentConfig(
        name=str(d.get("name", "experiment")),
        target=target,
        schedule=schedule,
        algorithms=list(algs),
        N=_get(src, d, "N", int, 100, pos, "N must be a positive integer"),
        pt_schemes=_get(src, d, "pt_schemes", int, 1, pos, "pt_schemes must be a positive integer"),
        k=_get(src, d, "k", int, 3, pos, "k must be a positive integer"),
        T=_get(src, d, "T", int, 20000, pos, "T must be a positive integer"),
        K=_get(src, d, "K", int, 1, pos, "K must be a positive integer"),
        seed=_get(src, d, "seed", int, 0, lambda v: v >= 0, "seed must be non-negative"),
        out=str(d.get("out", "runs")),
        thin=_get(src, d, "thin", int, 1, pos, "thin must be a positive integer"),
        record=d.get("record", "first"),
        repeats=_get(src, d, "repeats", int, 1, pos, "repeats must be a positive integer"),
        burn_in=_get(src, d, "burn_in", int, None, lambda v: v >= 0, "burn_in must be non-negative"),
        weight_mode=_get(src, d, "weight_mode", int, -1),
        adapt=bool(d.get("adapt", True)),
        tune=pilot,
        hottest_beta=hot,
        raw=d,
    )
    if cfg.record not in ("first", "all"):
        raise src.error("record must be 'first' or 'all'", "record")
    if cfg.burn_in is not None and cfg.burn_in >= cfg.T:
        raise src.error("burn_in must be smaller than T", "burn_in")
    if "refine" in d:
        if not isinstance(d["refine"], bool):
            raise src.error("refine must be true or false", "refine")
        cfg.refine = d["refine"]

    n_levels = len(schedule) if schedule is not None else None
    ql = d.get("quanta_levels", "all")
    if ql != "all":
        if not isinstance(ql, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in ql):
            raise src.error("quanta_levels must be 'all' or a list of adjacency indices", "quanta_levels")
        if n_levels is not None:
            for i, v in enumerate(ql):
                if not 0 <= v < n_levels - 1:
                    raise src.error(f"quanta_levels entry {v} outside 0..{n_levels - 2}", "quanta_levels", i)
        cfg.quanta_levels = list(ql)
    if "quanta" in cfg.algorithms and cfg.N < 2:
        raise src.error("QuanTA runs need N >= 2 (one half clusters while the other swaps)", "N")
    if "quanta" in cfg.algorithms and n_levels is not None and cfg.K > (cfg.N // 2) * n_levels:
        raise src.error(f"K={cfg.K} exceeds the {(cfg.N // 2) * n_levels} points clustered per phase", "K")

    start = d.get("start", 0.0)
    try:
        s = np.asarray(start, dtype=float)
        if s.ndim > 1 or (s.ndim == 1 and s.size != target.dimension) or not np.all(np.isfinite(s)):
            raise ValueError
    except (TypeError, ValueError):
        raise src.error(f"start must be a finite scalar or a {target.dimension}-vector", "start") from None
    cfg.start = s.tolist()

    if "bands" in d:
        bands = d["bands"]
        if not isinstance(bands, list) or not all(isinstance(b, list) and len(b) == 2 for b in bands):
            raise src.error("bands must be a list of [lower, upper] pairs", "bands")
        for i, (lo, hi) in enumerate(bands):
            if not float(lo) < float(hi):
                raise src.error("each band needs lower < upper", "bands", i)
        cfg.bands = [[float(lo), float(hi)] for lo, hi in bands]

    ws = d.get("weight_scheme", "random")
    if ws != "random" and not (isinstance(ws, int) and not isinstance(ws, bool) and 0 <= ws < cfg.N):
        raise src.error("weight_scheme must be 'random' or a scheme index", "weight_scheme")
    cfg.weight_scheme = ws

    if "scales" in d:
        sc = d["scales"]
        sc = [sc] if not isinstance(sc, list) else sc
        try:
            arr = np.asarray(sc, dtype=float)
        except (TypeError, ValueError):
            raise src.error("scales must be positive numbers", "scales") from None
        if np.any(arr <= 0) or (n_levels is not None and arr.size not in (1, n_levels)):
            raise src.error(f"scales must be one positive value or one per level ({n_levels})", "scales")
        cfg.scales = arr.tolist()
    return cfg


@dataclass
class TheoryConfig:
    marginals: list
    betas: list
    cold_betas: list
    gamma: float = 1.0
    brackets: list = field(default_factory=lambda: list(np.logspace(-3, 3, 7)))
    out: str = "theory"


def load_theory(path, text=None):
    """Parse a ``verify-theory`` config (top-level block ``theory``)."""
    text = open(path).read() if text is None else text
    src = _Source(text, str(path))
    block = src.data.get("theory")
    if not isinstance(block, dict):
        raise src.error("missing 'theory' block")
    names = block.get("marginals")
    if not isinstance(names, list) or not names:
        raise src.error("marginals must be a non-empty list", "theory", "marginals")
    for i, name in enumerate(names):
        try:
            get_marginal(name)
        except ConfigurationError as exc:
            raise src.error(str(exc), "theory", "marginals", i) from None

    def grid(key, default):
        g = block.get(key, default)
        if isinstance(g, dict):
            try:
                return list(np.logspace(np.log10(g["start"]), np.log10(g["stop"]), int(g["num"])))
            except (KeyError, TypeError, ValueError):
                raise src.error(f"{key} must be a list or {{start, stop, num}}", "theory", key) from None
        if not isinstance(g, list) or not g or any(not isinstance(v, (int, float)) or v <= 0 for v in g):
            raise src.error(f"{key} must be a list of positive numbers", "theory", key)
        return [float(v) for v in g]

    cold = grid("cold_betas", {"start": 10, "stop": 1000, "num": 9})
    if np.any(np.diff(cold) <= 0):
        raise src.error("cold_betas must be strictly increasing", "theory", "cold_betas")
    return TheoryConfig(
        marginals=list(names),
        betas=grid("betas", [1.0, 10.0, 100.0]),
        cold_betas=cold,
        gamma=_get(src, block, "gamma", float, 1.0, lambda v: v > 0, "gamma must be positive", ("theory",)),
        brackets=grid("brackets", list(np.logspace(-3, 3, 7))),
        out=str(src.data.get("out", "theory")),
    )


def load_tune(path, text=None):
    """Parse a ``tune-schedule`` config: a ``target`` block and a ``tune`` block."""
    text = open(path).read() if text is None else text
    src = _Source(text, str(path))
    if "target" not in src.data:
        raise src.error("missing required block 'target'")
    target = build_target(src, src.data["target"])
    block = src.data.get("tune")
    if not isinstance(block, dict):
        raise src.error("missing 'tune' block")
    hot = _get(src, block, "hottest_beta", float, check=lambda v: 0 < v < 1,
               msg="hottest_beta must lie in (0, 1)", path=("tune",))
    extra = {k: v for k, v in block.items() if k != "hottest_beta"}
    try:
        pilot = PilotConfig(**extra)
    except TypeError as exc:
        raise src.error(f"bad tune settings: {exc}", "tune") from None
    if pilot.algorithm not in ("pt", "quanta"):
        raise src.error("tune.algorithm must be 'pt' or 'quanta'", "tune", "algorithm")
    return target, hot, pilot, str(src.data.get("out", "tuned"))
