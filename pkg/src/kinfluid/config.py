"""Run configuration: JSON loading, defaults and validation."""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .state import (
    AlignmentKernel,
    GridSpec,
    LocalAlignment,
    ModelParams,
    NonlocalAlignment,
)


class ConfigError(ValueError):
    pass


SCENARIOS = ("equilibrium", "homogeneous_relaxation", "two_temperature", "perturbed")


def _unit(dim: int, scale: float = 1.0) -> list:
    return [scale] + [0.0] * (dim - 1)


def scenario_defaults(name: str, dim: int) -> dict:
    if name == "equilibrium":
        return {"rho_c": 1.0, "f_c": 1.0}
    if name == "homogeneous_relaxation":
        return {"rho_c": 1.0, "f_c": 1.0, "v0": [0.0] * dim, "gap": _unit(dim)}
    if name == "two_temperature":
        return {"rho_c": 1.0, "f_c": 1.0, "v_c": [0.0] * dim, "a": _unit(dim)}
    if name == "perturbed":
        return {
            "rho_c": 1.0,
            "f_c": 1.0,
            "epsilon": 0.05,
            "velocity_spread": 0.1,
            "drift": _unit(dim, 0.1),
            "fluid_amplitude": 0.05,
            "energy_cap": None,
        }
    raise ConfigError(f"scenario: unknown scenario {name!r}; expected one of {SCENARIOS}")


@dataclass
class RunConfig:
    dimension: int
    grid_n: int
    scenario: str
    t_end: float
    particles_per_cell: int = 4
    gamma: float = 2.0
    mu: float = 0.05
    lam: float = 0.0
    sigma: float = 0.05
    collision: dict = field(default_factory=lambda: {"type": "none"})
    cfl: float = 0.5
    dt: Optional[float] = None
    output_stride: int = 10
    scenario_params: dict = field(default_factory=dict)
    seed: int = 0
    deterministic: bool = False
    output_path: str = "output"
    rho_floor: float = 1e-10
    rho_f_floor: float = 1e-10

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            self.grid()
        except ValueError as e:
            raise ConfigError(f"dimension/grid_n: {e}") from None
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario: unknown scenario {self.scenario!r}")
        merged = scenario_defaults(self.scenario, self.dimension)
        unknown = set(self.scenario_params) - set(merged)
        if unknown:
            raise ConfigError(f"scenario_params: unknown keys {sorted(unknown)}")
        merged.update(self.scenario_params)
        for k, val in merged.items():
            if isinstance(val, list) and len(val) != self.dimension:
                raise ConfigError(f"scenario_params.{k}: expected {self.dimension} components")
        self.scenario_params = merged
        if not self.t_end >= 0:
            raise ConfigError("t_end: must be non-negative")
        if int(self.output_stride) != self.output_stride or self.output_stride < 1:
            raise ConfigError("output_stride: must be an integer >= 1")
        if int(self.particles_per_cell) != self.particles_per_cell or self.particles_per_cell < 1:
            raise ConfigError("particles_per_cell: must be an integer >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt: fixed time step must be positive")
        try:
            params = self.model_params()
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if isinstance(params.collision, NonlocalAlignment):
            try:
                params.collision.kernel.sample(self.grid())
            except ValueError as e:
                raise ConfigError(f"collision.kernel: {e}") from None

    def grid(self) -> GridSpec:
        return GridSpec(self.dimension, self.grid_n)

    def collision_operator(self):
        spec = dict(self.collision or {"type": "none"})
        kind = spec.pop("type", "none")
        if kind in (None, "none"):
            return None
        if kind == "local":
            return LocalAlignment()
        if kind == "nonlocal":
            try:
                return NonlocalAlignment(AlignmentKernel(**spec.get("kernel", {})))
            except (TypeError, ValueError) as e:
                raise ConfigError(f"collision.kernel: {e}") from None
        raise ConfigError(f"collision.type: unknown operator {kind!r}")

    def model_params(self) -> ModelParams:
        return ModelParams(
            gamma=self.gamma,
            mu=self.mu,
            lam=self.lam,
            collision=self.collision_operator(),
            sigma=self.sigma,
            rho_floor=self.rho_floor,
            rho_f_floor=self.rho_f_floor,
            cfl=self.cfl,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = copy.deepcopy(dict(data))
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        missing = [
            f.name
            for f in dataclasses.fields(cls)
            if f.default is dataclasses.MISSING
            and f.default_factory is dataclasses.MISSING
            and f.name not in data
        ]
        if missing:
            raise ConfigError(f"{missing[0]}: required field missing")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update({("lambda" if k == "lam" else k): v for k, v in changes.items()})
        return RunConfig.from_dict(d)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(data)
