"""Experiment configuration: JSON loading and validation before any numerics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, InputError
from .lattice import FAMILIES, Lattice, MetricSpec, build_lattice
from .markov import Box, SiteList, Union, half_space, rectangle

KINDS = ("green", "markov-check", "transfer", "spectrum", "decouple", "verify-all")
TIERS = ("small", "full")
REGION_TYPES = ("half-space", "rectangle", "box", "union", "slice", "sites", "file")


@dataclass
class ExperimentConfig:
    id: str
    kind: str
    lattice: dict = field(default_factory=dict)
    metric: dict = field(default_factory=lambda: {"family": "flat"})
    mass: float = 1.0
    params: dict = field(default_factory=dict)
    seed: int = 0
    base: Path = Path(".")

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def build_lattice(self) -> Lattice:
        lat = self.lattice
        return build_lattice(lat["shape"], lat["spacing"], lat.get("origin"))

    def metric_spec(self) -> MetricSpec:
        params = dict(self.metric.get("parameters", {}))
        if self.metric["family"] == "tabulated":
            params["path"] = str(self.resolve(params["path"]))
        return MetricSpec(self.metric["family"], params)


def _err(msg, where="config.load_config"):
    return ConfigurationError(msg, where=where)


def _need(d: dict, key: str, ctx: str):
    if key not in d:
        raise _err(f"{ctx}: missing {key!r}")
    return d[key]


def _numbers(v, ctx, length=None):
    if not isinstance(v, (list, tuple)) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise _err(f"{ctx}: expected a list of numbers")
    if length is not None and len(v) != length:
        raise _err(f"{ctx}: expected {length} entries, got {len(v)}")
    return v


def validate_region(spec, cfg: ExperimentConfig, ctx: str, dim: int = 2) -> None:
    if not isinstance(spec, dict):
        raise _err(f"{ctx}: region must be an object")
    kind = _need(spec, "type", ctx)
    if kind not in REGION_TYPES:
        raise _err(f"{ctx}: unknown region type {kind!r}")
    if kind == "half-space":
        if spec.get("op") not in ("<=", ">="):
            raise _err(f"{ctx}: half-space op must be '<=' or '>='")
        _numbers([_need(spec, "axis", ctx), _need(spec, "value", ctx)], ctx)
    elif kind == "rectangle":
        _numbers(_need(spec, "t", ctx), f"{ctx}.t", 2)
        _numbers(_need(spec, "x", ctx), f"{ctx}.x", 2)
    elif kind == "box":
        for k in ("lower", "upper"):
            v = _need(spec, k, ctx)
            if not isinstance(v, list) or len(v) != dim:
                raise _err(f"{ctx}.{k}: expected {dim} entries (null for open)")
    elif kind == "union":
        parts = _need(spec, "parts", ctx)
        if not parts:
            raise _err(f"{ctx}: union needs parts")
        for i, p in enumerate(parts):
            validate_region(p, cfg, f"{ctx}.parts[{i}]", dim)
    elif kind == "slice":
        _numbers([_need(spec, "sigma", ctx)], ctx)
    elif kind == "sites":
        _numbers(_need(spec, "sites", ctx), f"{ctx}.sites")
    elif kind == "file":
        path = cfg.resolve(_need(spec, "path", ctx))
        if not path.is_file():
            raise InputError(f"{ctx}: region file {path} not found", where="config.load_config")


def region_predicate(spec: dict, lattice: Lattice):
    """Predicate (callable on points) for a validated region spec; slice/sites/file use indices."""
    kind = spec["type"]
    if kind == "half-space":
        return half_space(int(spec["axis"]), spec["op"], float(spec["value"]), lattice.dim)
    if kind == "rectangle":
        return rectangle(spec["t"], spec["x"])
    if kind == "box":
        return Box(tuple(spec["lower"]), tuple(spec["upper"]))
    if kind == "union":
        return Union(tuple(region_predicate(p, lattice) for p in spec["parts"]))
    if kind == "slice":
        sigma = int(spec["sigma"])
        if not 0 <= sigma < lattice.shape[0]:
            raise _err(f"slice {sigma} outside lattice", where="config.region_predicate")
        return SiteList(tuple(int(s) for s in lattice.slice_sites(sigma)))
    if kind == "sites":
        return SiteList(tuple(int(s) for s in spec["sites"]))
    raise _err(f"region type {kind!r} has no predicate", where="config.region_predicate")


def _validate_lattice(lat, ctx="lattice"):
    if not isinstance(lat, dict):
        raise _err(f"{ctx}: expected an object")
    shape = _numbers(_need(lat, "shape", ctx), f"{ctx}.shape")
    _numbers(_need(lat, "spacing", ctx), f"{ctx}.spacing", len(shape))
    if "origin" in lat:
        _numbers(lat["origin"], f"{ctx}.origin", len(shape))
    build_lattice(lat["shape"], lat["spacing"], lat.get("origin"))


def _validate_metric(cfg: ExperimentConfig):
    m = cfg.metric
    if not isinstance(m, dict) or m.get("family") not in FAMILIES:
        raise _err(f"metric.family must be one of {FAMILIES}")
    if m["family"] == "tabulated":
        path = cfg.resolve(_need(m.get("parameters", {}), "path", "metric.parameters"))
        if not path.is_file():
            raise InputError(f"tabulated metric {path} not found", where="config.load_config")
    if m["family"] == "diagonal-stationary" and "diag" not in m.get("parameters", {}):
        raise _err("diagonal-stationary metric needs parameters.diag")
    if m["family"] == "curve-induced":
        p = m.get("parameters", {})
        if "slope" not in p and "vertices" not in p:
            raise _err("curve-induced metric needs parameters.slope or parameters.vertices")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.kind not in KINDS:
        raise _err(f"kind must be one of {KINDS}, got {cfg.kind!r}")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise _err("seed must be a non-negative integer")
    p = cfg.params
    if cfg.kind == "verify-all":
        if p.get("tier", "small") not in TIERS:
            raise _err(f"tier must be one of {TIERS}")
        for i, inst in enumerate(p.get("instances", [])):
            sub = from_dict(inst, cfg.base) if isinstance(inst, dict) else load_config(cfg.resolve(inst))
            if sub.kind == "verify-all":
                raise _err(f"instances[{i}]: nested verify-all")
        return cfg
    _validate_lattice(cfg.lattice)
    dim = len(cfg.lattice["shape"])
    if not isinstance(cfg.mass, (int, float)) or not cfg.mass > 0:
        raise _err(f"mass must be positive, got {cfg.mass!r}")
    if cfg.kind != "decouple":
        _validate_metric(cfg)
    if cfg.kind == "green":
        srcs = _need(p, "sources", "params")
        for s in srcs:
            _numbers(s, "params.sources[]", dim)
        if "decay_steps" in p:
            _numbers(p["decay_steps"], "params.decay_steps")
        for s in p.get("agmon_sources", []):
            _numbers(s, "params.agmon_sources[]", dim)
        from .assembly import CONVENTIONS

        if p.get("agmon_convention", "linear") not in CONVENTIONS:
            raise _err(f"params.agmon_convention must be one of {sorted(CONVENTIONS)}")
    elif cfg.kind == "markov-check":
        if "instance" in p:
            from .catalog import MARKOV_INSTANCES

            if p["instance"] not in MARKOV_INSTANCES:
                raise _err(f"unknown markov instance {p['instance']!r}; known: {sorted(MARKOV_INSTANCES)}")
        else:
            for k in ("A", "B", "C"):
                validate_region(_need(p, k, "params"), cfg, f"params.{k}", dim)
    elif cfg.kind in ("transfer", "spectrum"):
        taus = _numbers(_need(p, "taus", "params"), "params.taus")
        if not taus or any(t <= 0 for t in taus):
            raise _err("params.taus must be positive")
    elif cfg.kind == "decouple":
        if dim != 2:
            raise _err("decouple runs on a two dimensional chart lattice")
        if cfg.metric.get("family", "flat") != "flat":
            raise _err("decouple builds its own chart metric from a flat physical metric")
        if "curve" in p:
            path = cfg.resolve(p["curve"])
            if not path.is_file():
                raise InputError(f"curve file {path} not found", where="config.load_config")
        elif "curve_vertices" not in p:
            raise _err("decouple needs params.curve (file) or params.curve_vertices")
        validate_region(_need(p, "L1", "params"), cfg, "params.L1", dim)
        validate_region(_need(p, "L2", "params"), cfg, "params.L2", dim)
        _numbers(p.get("rotations", [0.0]), "params.rotations")
    return cfg


def from_dict(d: dict, base=Path(".")) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise _err("configuration must be a JSON object")
    known = {"id", "kind", "lattice", "metric", "mass", "params", "seed"}
    extra = set(d) - known
    if extra:
        raise _err(f"unknown configuration keys {sorted(extra)}")
    kind = _need(d, "kind", "config")
    cfg = ExperimentConfig(
        id=str(d.get("id", kind)),
        kind=kind,
        lattice=d.get("lattice", {}),
        metric=d.get("metric", {"family": "flat"}),
        mass=d.get("mass", 1.0),
        params=d.get("params", {}),
        seed=d.get("seed", 0),
        base=Path(base),
    )
    return validate(cfg)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}", where="config.load_config") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})", where="config.load_config") from exc
    return from_dict(d, path.parent)
