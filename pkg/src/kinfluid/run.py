"""Run loop and time-series output."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import RunConfig
from .coupling import InstabilityError, SystemState, coupled_step
from .diagnostics import (
    DecayFit,
    EmpiricalBrackets,
    FunctionalRow,
    conservation_report,
    decay_fit,
    density_fluctuation,
    functional_row,
    predicted_limit,
)
from .fluid import stable_timestep
from .parallel import set_deterministic
from .scenarios import build_scenario

log = logging.getLogger(__name__)


@dataclass
class RunHistory:
    config: dict
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    decay: Optional[DecayFit] = None
    decay_error: Optional[str] = None
    conservation: Optional[dict] = None
    brackets: Optional[dict] = None
    status: str = "completed"
    final_state: Optional[SystemState] = field(default=None, repr=False, compare=False)

    def series(self, name: str) -> np.ndarray:
        """``(t, value)`` pairs for a scalar row field."""
        return np.array([(r.t, getattr(r, name)) for r in self.rows])

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "status": self.status,
            "rows": [r.to_dict() for r in self.rows],
            "summary": self.summary,
            "decay_fit": None if self.decay is None else self.decay.to_dict(),
            "decay_fit_error": self.decay_error,
            "conservation": self.conservation,
            "brackets": self.brackets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunHistory":
        fit = d.get("decay_fit")
        return cls(
            config=d["config"],
            rows=[FunctionalRow.from_dict(r) for r in d["rows"]],
            summary=d.get("summary", {}),
            decay=None if fit is None else DecayFit(
                fit["rate"], fit["r_squared"], tuple(fit["window"]), fit["samples"]
            ),
            decay_error=d.get("decay_fit_error"),
            conservation=d.get("conservation"),
            brackets=d.get("brackets"),
            status=d.get("status", "completed"),
        )


def _summary(state: SystemState, v_inf) -> dict:
    p = state.particles
    rho = state.fluid.rho
    return {
        "time": float(state.time),
        "particles": len(p),
        "rho_min": float(rho.min()),
        "rho_max": float(rho.max()),
        "v_max": float(np.max(np.linalg.norm(p.velocities, axis=1))),
        "v_infinity": [float(x) for x in v_inf],
    }


def _finish(history: RunHistory, state: SystemState, v_inf, brackets: EmpiricalBrackets):
    history.final_state = state
    history.summary = _summary(state, v_inf)
    history.conservation = conservation_report(history.rows).to_dict()
    history.brackets = brackets.to_dict()
    try:
        history.decay = decay_fit(history.series("L"))
    except ValueError as e:
        history.decay, history.decay_error = None, str(e)
    return history


def run_simulation(
    config: RunConfig,
    callback: Optional[Callable[[SystemState], None]] = None,
) -> RunHistory:
    """Integrate to ``t_end`` recording a diagnostics row every ``output_stride`` steps.

    The final state is always recorded.  ``callback`` sees every accepted
    state (including the initial one).  On instability the partial history
    is attached to the raised :class:`InstabilityError`.
    """
    set_deterministic(config.deterministic)
    state, config = build_scenario(config)
    params, grid = config.model_params(), config.grid()
    v_inf = predicted_limit(state)
    history = RunHistory(config=config.to_dict())
    brackets = EmpiricalBrackets()

    def record(s):
        row = functional_row(s, params)
        history.rows.append(row)
        brackets.update(row, density_fluctuation(s))

    record(state)
    if callback:
        callback(state)
    step = 0
    while state.time < config.t_end:
        dt = config.dt if config.dt is not None else stable_timestep(
            state.fluid, state.particles, params, grid
        )
        remaining = config.t_end - state.time
        last = dt >= remaining * (1 - 1e-9)
        if last:
            dt = remaining
        try:
            new = coupled_step(state, params, grid, dt)
        except InstabilityError as exc:
            history.status = "aborted"
            if history.rows[-1].t != state.time:
                record(state)
            exc.history = _finish(history, state, v_inf, brackets)
            raise
        if last:
            new = SystemState(new.fluid, new.particles, float(config.t_end))
        state = new
        step += 1
        if callback:
            callback(state)
        if step % config.output_stride == 0 or last:
            record(state)
        if step % 1000 == 0:
            log.info("step %d  t=%.4g  L=%.4e", step, state.time, history.rows[-1].L)
    return _finish(history, state, v_inf, brackets)


def csv_header(dim: int) -> list:
    vec = lambda name: [f"{name}_{i}" for i in range(dim)]  # noqa: E731
    return (
        ["t", "mass_fluid", "mass_kinetic"]
        + vec("momentum")
        + vec("vc")
        + vec("mc")
        + vec("uc")
        + ["E_total", "L", "E_int", "D", "E_sigma", "D_sigma"]
        + [f"J{i}" for i in range(1, 10)]
        + ["bl_bound", "rho_min", "rho_max", "u_max"]
    )


def _csv_values(row: FunctionalRow) -> list:
    return (
        [row.t, row.mass_fluid, row.mass_kinetic]
        + list(row.total_momentum)
        + list(row.v_c)
        + list(row.m_c)
        + list(row.u_c)
        + [row.E_total, row.L, row.E_int, row.D, row.E_sigma, row.D_sigma]
        + list(row.J)
        + [row.bl_bound, row.rho_min, row.rho_max, row.u_max]
    )


def write_timeseries(history: RunHistory, path, format: str = "csv") -> Path:
    path = Path(path)
    if format == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(csv_header(int(history.config["dimension"])))
            for row in history.rows:
                writer.writerow([format_float(x) for x in _csv_values(row)])
    elif format == "json":
        path.write_text(json.dumps(history.to_dict(), indent=1))
    else:
        raise ValueError(f"unknown output format {format!r}")
    return path


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def read_timeseries_json(path) -> RunHistory:
    return RunHistory.from_dict(json.loads(Path(path).read_text()))
