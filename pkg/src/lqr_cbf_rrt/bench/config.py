"""Scenario files: YAML with nested sections, validated into ``ScenarioConfig``.

Every section is optional except ``model``; missing values fall back to the
defaults of the corresponding library dataclass. See
``configs/paper_env.yaml`` for an annotated example.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ..cbf import CbfParams, ObstacleSpec
from ..dynamics import MODELS, DynamicsModel, make_model
from ..lqr import CostWeights
from ..planner import PlannerConfig
from ..sampler import SamplerConfig
from ..steering import SteerConfig

BUNDLED = ("paper_env", "paper_env_unicycle", "obstacle_free")
DEFAULT_SEEDS = (0, 20, 42, 45, 100)


class ConfigParseError(ValueError):
    """The file is missing or is not well-formed YAML."""


class ValidationError(ValueError):
    """A value is out of range; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Baseline:
    gain_cache: bool = True
    adaptive_sampling: bool = True


BASELINES = {
    "ours": Baseline(True, True),
    "no-cache": Baseline(False, True),
    "no-adaptive": Baseline(True, False),
    "no-cache-no-adaptive": Baseline(False, False),
}


@dataclass
class ScenarioConfig:
    name: str
    model_name: str
    model_options: dict
    bounds: tuple
    obstacles: list[ObstacleSpec]
    x_init: np.ndarray
    goal: tuple
    goal_radius: float
    cbf: CbfParams | None
    weights: CostWeights
    steer: SteerConfig
    planner: PlannerConfig
    sampler: SamplerConfig
    baseline: Baseline = field(default_factory=Baseline)
    seeds: tuple = DEFAULT_SEEDS

    def make_model(self) -> DynamicsModel:
        return make_model(self.model_name, **self.model_options)

    def with_overrides(self, *, iterations=None, seeds=None, baseline: Baseline | None = None) -> "ScenarioConfig":
        out = replace(self)
        if iterations is not None:
            if iterations < 0:
                raise ValidationError("planner.iterations", "must be >= 0")
            out.planner = replace(out.planner, iterations=int(iterations))
        if seeds is not None:
            out.seeds = tuple(int(s) for s in seeds)
        if baseline is not None:
            out.baseline = baseline
        return out


def _section(raw: dict, key: str) -> dict:
    val = raw.get(key, {})
    if val is None:
        return {}
    if not isinstance(val, dict):
        raise ValidationError(key, "must be a mapping")
    return val


def _floats(val, key, length=None):
    try:
        arr = [float(v) for v in val]
    except (TypeError, ValueError):
        raise ValidationError(key, f"expected a list of numbers, got {val!r}") from None
    if length is not None and len(arr) != length:
        raise ValidationError(key, f"expected {length} numbers, got {len(arr)}")
    if not all(math.isfinite(v) for v in arr):
        raise ValidationError(key, "values must be finite")
    return arr


def _matrix(val, key, n):
    """A scalar or list of diagonal entries or a full nested list."""
    if isinstance(val, (int, float)):
        return float(val) * np.eye(n)
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 1 and len(arr) == n:
        return np.diag(arr)
    if arr.shape == (n, n):
        return arr
    raise ValidationError(key, f"expected a scalar, {n} diagonal entries or an {n}x{n} matrix")


def _build(cls, values: dict, key: str, **extra):
    try:
        return cls(**values, **extra)
    except TypeError as exc:
        raise ValidationError(key, str(exc)) from None
    except ValueError as exc:
        raise ValidationError(key, str(exc)) from None


def parse_config(raw: dict, name: str = "scenario") -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigParseError("top level must be a mapping")

    model_raw = raw.get("model")
    if isinstance(model_raw, str):
        model_raw = {"name": model_raw}
    if not isinstance(model_raw, dict) or "name" not in model_raw:
        raise ValidationError("model.name", "required")
    model_options = {k: v for k, v in model_raw.items() if k != "name"}
    if model_raw["name"] not in MODELS:
        raise ValidationError("model.name", f"unknown model {model_raw['name']!r}; expected one of {sorted(MODELS)}")
    try:
        model = make_model(model_raw["name"], **model_options)
    except (TypeError, ValueError) as exc:
        raise ValidationError("model", str(exc)) from None

    ws = _section(raw, "workspace")
    bounds = ws.get("bounds", [[0.0, 50.0], [0.0, 30.0]])
    if not isinstance(bounds, list) or len(bounds) != 2:
        raise ValidationError("workspace.bounds", "expected two [lo, hi] pairs")
    bounds = tuple(tuple(_floats(b, "workspace.bounds", 2)) for b in bounds)
    if any(lo >= hi for lo, hi in bounds):
        raise ValidationError("workspace.bounds", "each pair needs lo < hi")

    obstacles = []
    default_radius = float(raw.get("obstacle_radius", 2.0))
    for i, ob in enumerate(raw.get("obstacles") or []):
        key = f"obstacles[{i}]"
        if isinstance(ob, dict):
            center, radius = ob.get("center"), ob.get("radius", default_radius)
        else:
            center, radius = ob, default_radius
        center = _floats(center, f"{key}.center", 2)
        try:
            obstacles.append(ObstacleSpec(tuple(center), float(radius)))
        except (TypeError, ValueError) as exc:
            raise ValidationError(key, str(exc)) from None

    start = raw.get("start")
    if start is None:
        raise ValidationError("start", "required")
    start = _floats(start, "start")
    if len(start) == model.n:
        x_init = np.array(start)
    elif len(start) == 2:
        x_init = model.lift(np.array(start), None)
    else:
        raise ValidationError("start", f"expected 2 workspace or {model.n} state values")

    goal_raw = _section(raw, "goal")
    goal = tuple(_floats(goal_raw.get("position", [30.0, 24.0]), "goal.position", 2))
    goal_radius = float(goal_raw.get("radius", 1.5))
    if not goal_radius > 0:
        raise ValidationError("goal.radius", "must be positive")

    for key, p in (("start", model.workspace(x_init)), ("goal.position", np.array(goal))):
        for i, ob in enumerate(obstacles):
            h = float(np.sum((np.asarray(p) - ob.center) ** 2) - ob.radius ** 2)
            if h < 0:
                raise ValidationError(key, f"{np.asarray(p).tolist()} lies inside obstacle {i} at {list(ob.center)}")
        if not all(lo <= v <= hi for v, (lo, hi) in zip(p, bounds)):
            raise ValidationError(key, "outside the workspace bounds")

    cbf_raw = _section(raw, "cbf")
    cbf = None
    if obstacles or cbf_raw:
        default_variant = "double_integrator" if model.name.startswith("double") else "unicycle"
        cbf_raw = {"k1": 6.0, "k2": 1.5, "variant": default_variant, **cbf_raw}
        cbf = _build(CbfParams, cbf_raw, "cbf")

    w_raw = _section(raw, "weights")
    weights = _build(CostWeights, {"Q": _matrix(w_raw.get("Q", 1.0), "weights.Q", model.n),
                                   "R": _matrix(w_raw.get("R", 1.0), "weights.R", model.m)}, "weights")

    steer = _build(SteerConfig, _section(raw, "steer"), "steer")
    planner_raw = dict(_section(raw, "planner"))
    planner = _build(PlannerConfig, planner_raw, "planner", goal=goal, goal_radius=goal_radius)
    sampler_raw = dict(_section(raw, "sampler"))
    sampler = _build(SamplerConfig, sampler_raw, "sampler", bounds=bounds)

    base_raw = _section(raw, "baseline")
    baseline = Baseline(bool(base_raw.get("gain_cache", True)), bool(base_raw.get("adaptive_sampling", True)))
    seeds = raw.get("seeds", list(DEFAULT_SEEDS))
    try:
        seeds = tuple(int(s) for s in seeds)
    except (TypeError, ValueError):
        raise ValidationError("seeds", "expected a list of integers") from None

    return ScenarioConfig(name=str(raw.get("name", name)), model_name=model.name, model_options=model_options,
                          bounds=bounds, obstacles=obstacles, x_init=x_init, goal=goal, goal_radius=goal_radius,
                          cbf=cbf, weights=weights, steer=steer, planner=planner, sampler=sampler,
                          baseline=baseline, seeds=seeds)


def load_config(path_or_name) -> ScenarioConfig:
    """Load a YAML scenario from a path, or one of the bundled names."""
    text = None
    name = str(path_or_name)
    if name in BUNDLED and not Path(name).exists():
        text = resources.files(__package__).joinpath("configs", f"{name}.yaml").read_text()
    else:
        path = Path(path_or_name)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigParseError(f"cannot read {path}: {exc}") from None
        name = path.stem
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{name}: {exc}") from None
    return parse_config(raw, name)
