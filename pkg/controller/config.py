"""
JSON configuration layer.

A config file is one JSON object with optional sections

    {"planner": {...}, "weights": {...}, "solver": {...},
     "pipeline": {...}, "run": {...}}

Every key is optional and falls back to the dataclass default. Unknown
sections or keys raise ConfigError. Scenario files may carry "pipeline" and
"planner" overrides that are applied on top (scenario geometry decides the
feature spacing, for instance).
"""

import json
import math
from dataclasses import dataclass, field, fields, replace

from model.scenario import ConfigError
from solver.auglag import SolverConfig
from solver.nlp_core import Weights
from solver.obstacle_pipeline import PipelineConfig
from solver.planner import PlannerConfig

SECTIONS = ("planner", "weights", "solver", "pipeline", "run")


@dataclass(frozen=True)
class RunConfig:
    """Simulation settings (times in seconds)."""

    seed: int = 0
    mode: str = "quad"
    time_limit: float = None
    stall_timeout: float = 6.0
    stall_distance: float = 0.05
    realtime_budget: bool = False

    def __post_init__(self):
        if self.mode not in ("quad", "hyperplane"):
            raise ValueError(f"mode must be 'quad' or 'hyperplane', got {self.mode!r}")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError(f"time_limit must be positive, got {self.time_limit}")
        if not self.stall_timeout > 0:
            raise ValueError(f"stall_timeout must be positive, got {self.stall_timeout}")


@dataclass(frozen=True, eq=False)
class AppConfig:
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def for_run(self, seed=None, mode=None):
        """Copy with the run seed/mode set and the planner degree following the mode."""
        run = self.run
        if seed is not None:
            run = replace(run, seed=int(seed))
        if mode is not None:
            run = replace(run, mode=mode)
        planner = self.planner.with_mode(run.mode)
        if not run.realtime_budget:
            planner = replace(planner, solver=replace(planner.solver, max_wall_time=math.inf))
        return replace(self, run=run, planner=planner)

    def to_json(self):
        def plain(obj, skip=()):
            out = {}
            for f in fields(obj):
                if f.name in skip:
                    continue
                v = getattr(obj, f.name)
                if isinstance(v, float) and math.isinf(v):
                    v = "inf"
                elif isinstance(v, tuple):
                    v = list(v)
                out[f.name] = v
            return out

        return {
            "planner": plain(self.planner, skip=("weights", "solver")),
            "weights": self.planner.weights.to_json(),
            "solver": plain(self.planner.solver),
            "pipeline": plain(self.pipeline),
            "run": plain(self.run),
        }


def _build(cls, data, section, base=None):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    values = {k: (math.inf if v == "inf" else v) for k, v in data.items()}
    try:
        if base is not None:
            return replace(base, **values)
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {section!r} section: {e}")


def config_from_json(data):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    weights = _build(Weights, data.get("weights", {}), "weights")
    solver = _build(SolverConfig, data.get("solver", {}), "solver")
    planner_data = data.get("planner", {})
    for nested in ("weights", "solver"):
        if isinstance(planner_data, dict) and nested in planner_data:
            raise ConfigError(f"'{nested}' is a top-level section, not a planner key")
    planner = _build(PlannerConfig, planner_data, "planner")
    planner = replace(planner, weights=weights, solver=solver)
    pipeline = _build(PipelineConfig, data.get("pipeline", {}), "pipeline")
    run = _build(RunConfig, data.get("run", {}), "run")
    return AppConfig(planner=planner, pipeline=pipeline, run=run)


def load_config(path=None):
    """Read a config file; None gives the full defaults."""
    if path is None:
        return AppConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}")
    return config_from_json(data)


def apply_scenario_overrides(config, scenario):
    pipeline = config.pipeline
    planner = config.planner
    if scenario.pipeline:
        pipeline = _build(PipelineConfig, scenario.pipeline, "scenario pipeline", base=pipeline)
    if scenario.planner:
        for nested in ("weights", "solver"):
            if nested in scenario.planner:
                raise ConfigError(f"scenario planner overrides cannot set {nested!r}")
        planner = _build(PlannerConfig, scenario.planner, "scenario planner", base=planner)
    return replace(config, pipeline=pipeline, planner=planner)
