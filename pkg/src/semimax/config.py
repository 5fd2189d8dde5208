"""Scenario configuration: YAML schema, validation and round-tripping.

Example::

    version: 1
    scenario: half-space-conductor
    omega: 1.0
    epsilons: [0.0625, 0.03125]
    parameters: {alpha: 0.1}
    media:
      exterior: {epsilon: "1", eta: "1"}
    wave: {direction: [0.5, 0.0, -0.8660254037844386], amplitude: 1.0, mode: "+1"}
    grid: {nodes: [256, 256], resolution: 8}
    window: {half_width: 32, taper: cosine, taper_fraction: 1.0}
    rays: {count: 20000, seed: 7, dt: 0.02}
    probes: [[2.0, 0.0, 3.0]]
    output_dir: out
    tolerances: {cross.peak_ratio: 0.1}

Media accept either ``epsilon``/``eta`` or ``speed``/``eta`` expressions in
``x1 x2 x3`` and the named parameters. Grid spacing is
``pi * eps / resolution``, so the sampled wave numbers reach
``resolution / 2``.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError
from .expr import parse_expression
from .spectral import Medium

CONFIG_VERSION = 1
SCENARIOS = ("free-space", "half-space-conductor", "calderon-interface", "curved-interface")


def _positive(name, value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number") from None
    if not np.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return value


def _int(name, value, minimum=0):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _vector(name, value, n=3):
    try:
        arr = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of {n} numbers") from None
    if len(arr) != n or not all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a list of {n} finite numbers")
    return arr


@dataclass
class MediumSpec:
    """Coefficient expressions; ``speed`` replaces ``epsilon`` when given."""

    eta: str = "1"
    epsilon: Optional[str] = "1"
    speed: Optional[str] = None

    def build(self, params: dict, region: str = "whole-space") -> Medium:
        eta = parse_expression(self.eta, params)
        if self.speed is not None:
            v = parse_expression(self.speed, params)
            if not eta.is_constant:
                raise ConfigError("a speed-defined medium needs a constant eta")
            med = Medium.from_speed(v, v.gradient, eta=float(eta(np.zeros(3))), region=region)
            return dataclasses.replace(med, description=f"speed={self.speed} eta={self.eta}")
        eps = parse_expression(self.epsilon, params)
        return Medium(
            epsilon=eps,
            eta=eta,
            grad_epsilon=eps.gradient,
            grad_eta=eta.gradient,
            region=region,
            description=f"epsilon={self.epsilon} eta={self.eta}",
        )

    def to_dict(self) -> dict:
        if self.speed is not None:
            return {"speed": self.speed, "eta": self.eta}
        return {"epsilon": self.epsilon, "eta": self.eta}


@dataclass
class ScenarioConfig:
    scenario: str
    omega: float
    epsilons: list
    media: dict
    version: int = CONFIG_VERSION
    parameters: dict = field(default_factory=dict)
    wave: dict = field(default_factory=lambda: {"direction": [0.5, 0.0, -0.8660254037844386], "amplitude": 1.0, "mode": "+1"})
    grid: dict = field(default_factory=lambda: {"nodes": [256, 256], "resolution": 8})
    window: dict = field(default_factory=lambda: {"half_width": 32, "taper": "cosine", "taper_fraction": 1.0})
    rays: dict = field(default_factory=lambda: {"count": 20000, "seed": 7, "dt": 0.02})
    interface: dict = field(default_factory=dict)
    probes: list = field(default_factory=list)
    output_dir: str = "semimax-out"
    tolerances: dict = field(default_factory=dict)

    def medium(self, name: str = "exterior") -> Medium:
        if name not in self.media:
            raise ConfigError(f"medium {name!r} is not defined")
        region = "exterior" if name == "exterior" else "interior"
        return self.media[name].build(self.parameters, region)

    def tolerance(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "scenario": self.scenario,
            "omega": self.omega,
            "epsilons": list(self.epsilons),
            "parameters": dict(self.parameters),
            "media": {k: v.to_dict() for k, v in self.media.items()},
            "wave": copy.deepcopy(self.wave),
            "grid": copy.deepcopy(self.grid),
            "window": copy.deepcopy(self.window),
            "rays": copy.deepcopy(self.rays),
            "interface": copy.deepcopy(self.interface),
            "probes": copy.deepcopy(self.probes),
            "output_dir": self.output_dir,
            "tolerances": dict(self.tolerances),
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


_KNOWN = {
    "version", "scenario", "omega", "epsilons", "parameters", "media", "wave", "grid",
    "window", "rays", "interface", "probes", "output_dir", "tolerances",
}


def parse_config(data) -> ScenarioConfig:
    """Validate a mapping (or YAML text) and build a :class:`ScenarioConfig`."""
    if isinstance(data, str):
        try:
            data = yaml.safe_load(data)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(data) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    if "version" not in data:
        raise ConfigError("the version field is mandatory")
    if data["version"] != CONFIG_VERSION:
        raise ConfigError(f"unsupported configuration version {data['version']!r}")
    kind = data.get("scenario")
    if kind not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {kind!r}")
    omega = _positive("omega", data.get("omega"))
    eps = data.get("epsilons")
    if not isinstance(eps, list) or not eps:
        raise ConfigError("epsilons must be a non-empty list")
    eps = [_positive("epsilons entry", e) for e in eps]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("epsilons must be strictly decreasing")
    params = data.get("parameters") or {}
    if not isinstance(params, dict):
        raise ConfigError("parameters must be a mapping")
    params = {str(k): float(v) for k, v in params.items()}
    media_raw = data.get("media")
    if not isinstance(media_raw, dict) or "exterior" not in media_raw:
        raise ConfigError("media.exterior is required")
    media = {}
    for name, spec in media_raw.items():
        if name not in ("exterior", "interior") or not isinstance(spec, dict):
            raise ConfigError(f"invalid medium entry {name!r}")
        extra = set(spec) - {"epsilon", "eta", "speed"}
        if extra:
            raise ConfigError(f"unknown medium keys {sorted(extra)}")
        m = MediumSpec(
            eta=str(spec.get("eta", "1")),
            epsilon=None if "speed" in spec else str(spec.get("epsilon", "1")),
            speed=str(spec["speed"]) if "speed" in spec else None,
        )
        m.build(params)  # validates the expressions
        media[name] = m
    if kind == "calderon-interface" and "interior" not in media:
        raise ConfigError("calderon-interface needs media.interior")
    cfg = ScenarioConfig(scenario=kind, omega=omega, epsilons=eps, media=media, parameters=params)
    for key in ("wave", "grid", "window", "rays", "interface", "tolerances"):
        if key in data and data[key] is not None:
            if not isinstance(data[key], dict):
                raise ConfigError(f"{key} must be a mapping")
            merged = getattr(cfg, key)
            merged.update(data[key])
    w = cfg.wave
    w["direction"] = _vector("wave.direction", w.get("direction"))
    if np.linalg.norm(w["direction"]) == 0:
        raise ConfigError("wave.direction must be non-zero")
    if kind == "half-space-conductor" and w["direction"][2] >= 0:
        raise ConfigError("the incident direction must point into the wall (negative x3 component)")
    w["amplitude"] = float(w.get("amplitude", 1.0))
    if str(w.get("mode", "+1")) not in ("+1", "+2"):
        raise ConfigError("wave.mode must be '+1' or '+2'")
    w["mode"] = str(w.get("mode", "+1"))
    g = cfg.grid
    nodes = g.get("nodes")
    if not isinstance(nodes, list) or not 1 <= len(nodes) <= 3:
        raise ConfigError("grid.nodes must list 1 to 3 node counts")
    g["nodes"] = [_int("grid.nodes entry", n, 4) for n in nodes]
    g["resolution"] = _positive("grid.resolution", g.get("resolution"))
    win = cfg.window
    win["half_width"] = _int("window.half_width", win.get("half_width"), 1)
    if win.get("taper") not in ("cosine", "none"):
        raise ConfigError("window.taper must be 'cosine' or 'none'")
    win["taper_fraction"] = float(win.get("taper_fraction", 0.05))
    r = cfg.rays
    r["count"] = _int("rays.count", r.get("count"), 0)
    r["seed"] = _int("rays.seed", r.get("seed"), 0)
    r["dt"] = _positive("rays.dt", r.get("dt"))
    if kind == "curved-interface":
        cfg.interface.setdefault("phi", "0")
        parse_expression(cfg.interface["phi"], params)
    probes = data.get("probes") or []
    cfg.probes = [_vector("probe", p) for p in probes]
    cfg.output_dir = str(data.get("output_dir", cfg.output_dir))
    cfg.tolerances = {str(k): float(v) for k, v in cfg.tolerances.items()}
    return cfg


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from None
    return parse_config(text)


def default_config(kind: str = "half-space-conductor", **overrides) -> ScenarioConfig:
    """Built-in configuration for each scenario kind."""
    base = {
        "version": CONFIG_VERSION,
        "scenario": kind,
        "omega": 1.0,
        "epsilons": [1 / 16, 1 / 32],
        "media": {"exterior": {"epsilon": "1", "eta": "1"}},
    }
    if kind == "calderon-interface":
        base["media"]["interior"] = {"epsilon": "2.25", "eta": "1"}
    if kind == "curved-interface":
        base["interface"] = {"phi": "0.2*x1"}
    if kind == "free-space":
        base["wave"] = {"direction": [0.6, 0.0, 0.8], "amplitude": 1.0, "mode": "+1"}
        base["grid"] = {"nodes": [64, 64], "resolution": 8}
        base["epsilons"] = [1 / 16, 1 / 32, 1 / 64]
    base.update(overrides)
    return parse_config(base)
