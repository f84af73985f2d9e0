"""Experiment configuration: JSON in, validated dataclasses out.

Schema (every key optional; omitted keys take the reference defaults)::

    {
      "scenario":   {<scenario key>: value, ...},
      "sweep":      {"sinr_dB": [...], "cache_size": [...], "n_users": [...], "E_bh": [...]},
      "cross":      false,
      "trials":     50,
      "base_seed":  0,
      "algorithms": ["lgsbf", "cb", "bs_only", "da_only"],
      "output":     "results.csv",
      "workers":    1,
      "solver":     {"tau": 1e-5, "n_rand": 50, "rel_obj_tol": 1e-4, "max_outer": 30}
    }

Scenario keys are listed in :data:`SCENARIO_KEYS`.  A sweep axis that is
omitted is held at the scenario value.  At most one axis may have more
than one value unless ``cross`` is true, in which case the full product of
the axes is run.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, fields
from typing import Dict, List, Tuple

from ..lgsbf.algorithms import ALGORITHMS
from ..lgsbf.stage1 import SolverSettings
from ..netgen import ChannelParams, ScenarioConfig, TopologyConfig

SWEEP_AXES = ("sinr_dB", "cache_size", "n_users", "E_bh")

_TOPOLOGY_KEYS = tuple(f.name for f in fields(TopologyConfig))
_CHANNEL_KEYS = tuple(f.name for f in fields(ChannelParams))
_TOP_KEYS = tuple(f.name for f in fields(ScenarioConfig) if f.name not in ("topology", "channel"))
SCENARIO_KEYS = _TOPOLOGY_KEYS + _CHANNEL_KEYS + _TOP_KEYS
SOLVER_KEYS = tuple(f.name for f in fields(SolverSettings))
CONFIG_KEYS = ("scenario", "sweep", "cross", "trials", "base_seed", "algorithms",
               "output", "workers", "solver")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message lists the offending keys."""


def scenario_config(overrides: dict) -> ScenarioConfig:
    """ScenarioConfig from flat key/value overrides of the defaults."""
    bad = sorted(set(overrides) - set(SCENARIO_KEYS))
    if bad:
        raise ConfigError(f"unknown scenario keys: {', '.join(bad)}")
    topo = {k: v for k, v in overrides.items() if k in _TOPOLOGY_KEYS}
    chan = {k: v for k, v in overrides.items() if k in _CHANNEL_KEYS}
    rest = {k: v for k, v in overrides.items() if k in _TOP_KEYS}
    if isinstance(rest.get("relative_power"), list):
        rest["relative_power"] = tuple(rest["relative_power"])
    try:
        return ScenarioConfig(topology=TopologyConfig(**topo), channel=ChannelParams(**chan), **rest)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid scenario values ({', '.join(sorted(overrides))}): {err}") from err


@dataclass(frozen=True)
class AxisPoint:
    sinr_dB: float
    cache_size: int
    n_users: int
    E_bh: float

    def as_dict(self) -> dict:
        return {"sinr_dB": self.sinr_dB, "cache_size": self.cache_size,
                "n_users": self.n_users, "E_bh": self.E_bh}

    def sort_key(self) -> tuple:
        return (self.sinr_dB, self.cache_size, self.n_users, self.E_bh)


@dataclass
class ExperimentConfig:
    scenario: dict = field(default_factory=dict)
    sweep: Dict[str, list] = field(default_factory=dict)
    cross: bool = False
    trials: int = 1
    base_seed: int = 0
    algorithms: Tuple[str, ...] = ALGORITHMS
    output: str = "results.csv"
    workers: int = 1
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        problems = []
        try:
            scenario_config(self.scenario)
        except ConfigError as err:
            problems.append(f"scenario: {err}")
        bad_axes = sorted(set(self.sweep) - set(SWEEP_AXES))
        if bad_axes:
            problems.append(f"sweep: unknown axes {', '.join(bad_axes)}")
        for axis, values in self.sweep.items():
            if axis in SWEEP_AXES and (not isinstance(values, (list, tuple)) or len(values) == 0):
                problems.append(f"sweep.{axis}: expected a nonempty list")
        multi = [a for a, v in self.sweep.items() if isinstance(v, (list, tuple)) and len(v) > 1]
        if len(multi) > 1 and not self.cross:
            problems.append(f"sweep: axes {', '.join(sorted(multi))} all vary; set cross=true "
                            "to run their product")
        if not isinstance(self.trials, int) or self.trials < 1:
            problems.append("trials: must be an integer >= 1")
        if not isinstance(self.base_seed, int) or self.base_seed < 0:
            problems.append("base_seed: must be a nonnegative integer")
        bad_algos = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad_algos or not self.algorithms:
            problems.append(f"algorithms: expected a nonempty subset of {list(ALGORITHMS)}")
        if not isinstance(self.workers, int) or self.workers < 1:
            problems.append("workers: must be an integer >= 1")
        bad_solver = sorted(set(self.solver) - set(SOLVER_KEYS))
        if bad_solver:
            problems.append(f"solver: unknown keys {', '.join(bad_solver)}")
        if problems:
            raise ConfigError("; ".join(problems))
        self.algorithms = tuple(self.algorithms)

    # ---- derived views
    def base_scenario(self) -> ScenarioConfig:
        return scenario_config(self.scenario)

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(**self.solver)

    def varying_axes(self) -> Tuple[str, ...]:
        """Axes given in the sweep section, in canonical order."""
        return tuple(a for a in SWEEP_AXES if a in self.sweep)

    def axis_points(self) -> List[AxisPoint]:
        base = self.base_scenario()
        defaults = {"sinr_dB": base.sinr_dB, "cache_size": base.cache_size,
                    "n_users": base.topology.n_users, "E_bh": base.E_bh}
        lists = [list(self.sweep.get(a, [defaults[a]])) for a in SWEEP_AXES]
        pts = [AxisPoint(float(s), int(c), int(u), float(e))
               for s, c, u, e in itertools.product(*lists)]
        return sorted(set(pts), key=AxisPoint.sort_key)

    def scenario_at(self, point: AxisPoint) -> ScenarioConfig:
        over = dict(self.scenario)
        over.update(sinr_dB=point.sinr_dB, cache_size=point.cache_size,
                    n_users=point.n_users, E_bh=point.E_bh)
        return scenario_config(over)

    def to_dict(self) -> dict:
        return {"scenario": dict(self.scenario), "sweep": {k: list(v) for k, v in self.sweep.items()},
                "cross": self.cross, "trials": self.trials, "base_seed": self.base_seed,
                "algorithms": list(self.algorithms), "output": self.output,
                "workers": self.workers, "solver": dict(self.solver)}


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    bad = sorted(set(d) - set(CONFIG_KEYS))
    if bad:
        raise ConfigError(f"unknown configuration keys: {', '.join(bad)}")
    return ExperimentConfig(**d)


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON experiment configuration."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    return config_from_dict(data)
