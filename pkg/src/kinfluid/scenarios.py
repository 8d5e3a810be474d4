"""Initial data for the built-in scenarios."""

from __future__ import annotations

import numpy as np

from .config import ConfigError, RunConfig
from .coupling import SystemState
from .diagnostics import total_energy
from .state import FluidState, GridSpec, ParticleEnsemble


def lattice_positions(grid: GridSpec, per_cell: int, shift: float = 0.0) -> np.ndarray:
    """``per_cell`` particles per cell on a sub-lattice along axis 0.

    Other coordinates sit at cell centres.  Cloud-in-cell deposition of such a
    lattice is spatially constant for any uniform translation of it.
    """
    sub = (np.arange(grid.n * per_cell) + 0.5 + shift) * grid.h / per_cell
    centres = (np.arange(grid.n) + 0.5) * grid.h
    axes = [sub] + [centres] * (grid.dim - 1)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _uniform_fluid(grid: GridSpec, rho_c: float, velocity) -> FluidState:
    rho = np.full(grid.shape, float(rho_c))
    u = np.asarray(velocity, dtype=float).reshape((-1,) + (1,) * grid.dim)
    return FluidState(rho, rho * u * np.ones(grid.vector_shape))


def _equal_weights(count: int, f_c: float) -> np.ndarray:
    return np.full(count, f_c / count)


def _equilibrium(cfg: RunConfig, grid: GridSpec):
    p = cfg.scenario_params
    x = lattice_positions(grid, cfg.particles_per_cell)
    particles = ParticleEnsemble(x, np.zeros_like(x), _equal_weights(len(x), p["f_c"]))
    return SystemState(_uniform_fluid(grid, p["rho_c"], np.zeros(grid.dim)), particles), cfg


def _homogeneous(cfg: RunConfig, grid: GridSpec):
    p = cfg.scenario_params
    x = lattice_positions(grid, cfg.particles_per_cell)
    v0 = np.asarray(p["v0"], dtype=float)
    v = np.broadcast_to(v0, x.shape).copy()
    particles = ParticleEnsemble(x, v, _equal_weights(len(x), p["f_c"]))
    fluid = _uniform_fluid(grid, p["rho_c"], v0 + np.asarray(p["gap"], dtype=float))
    return SystemState(fluid, particles), cfg


def _two_temperature(cfg: RunConfig, grid: GridSpec):
    p = cfg.scenario_params
    if cfg.particles_per_cell % 2:
        raise ConfigError("particles_per_cell: two_temperature needs an even count")
    half = cfg.particles_per_cell // 2
    xa = lattice_positions(grid, half)
    xb = lattice_positions(grid, half, shift=0.5)
    v_c = np.asarray(p["v_c"], dtype=float)
    a = np.asarray(p["a"], dtype=float)
    x = np.concatenate([xa, xb])
    v = np.concatenate([np.broadcast_to(v_c + a, xa.shape), np.broadcast_to(v_c - a, xb.shape)])
    particles = ParticleEnsemble(x, v, _equal_weights(len(x), p["f_c"]))
    return SystemState(_uniform_fluid(grid, p["rho_c"], v_c), particles), cfg


def _perturbed_state(cfg: RunConfig, grid: GridSpec, draws, scale: float) -> SystemState:
    p = cfg.scenario_params
    xs = grid.centers()
    rho = p["rho_c"] * (1.0 + scale * p["epsilon"] * np.sin(2 * np.pi * xs[0]))
    shear = np.sin(2 * np.pi * xs[-1])
    u = np.zeros(grid.vector_shape)
    u[0] = scale * p["fluid_amplitude"] * shear
    positions, normals = draws
    drift = np.asarray(p["drift"], dtype=float)
    v = scale * (drift + p["velocity_spread"] * normals)
    particles = ParticleEnsemble(positions, v, _equal_weights(len(positions), p["f_c"]))
    return SystemState(FluidState(rho, rho * u), particles)


def _perturbed(cfg: RunConfig, grid: GridSpec):
    """Sinusoidal density, a shear flow and a random particle cloud.

    With ``energy_cap`` set, all perturbation amplitudes are scaled by one
    common factor (found by bisection) until the initial total energy is at
    most the cap; the effective amplitudes are written back into the config.
    """
    p = cfg.scenario_params
    rng = np.random.default_rng(cfg.seed)
    count = cfg.particles_per_cell * grid.num_cells
    draws = (rng.random((count, grid.dim)), rng.standard_normal((count, grid.dim)))
    state = _perturbed_state(cfg, grid, draws, 1.0)
    cap = p.get("energy_cap")
    if cap is None:
        return state, cfg

    def energy(s):
        return total_energy(_perturbed_state(cfg, grid, draws, s), cfg.gamma)

    if energy(1.0) <= cap:
        return state, cfg
    if energy(0.0) > cap:
        raise ConfigError(
            f"scenario_params.energy_cap: {cap} is below the rest-state energy {energy(0.0):.6g}"
        )
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if energy(mid) <= cap else (lo, mid)
    scaled = dict(p)
    scaled["epsilon"] = lo * p["epsilon"]
    scaled["fluid_amplitude"] = lo * p["fluid_amplitude"]
    scaled["velocity_spread"] = lo * p["velocity_spread"]
    scaled["drift"] = [lo * d for d in p["drift"]]
    cfg = cfg.replace(scenario_params=scaled)
    return _perturbed_state(cfg, grid, draws, 1.0), cfg


_BUILDERS = {
    "equilibrium": _equilibrium,
    "homogeneous_relaxation": _homogeneous,
    "two_temperature": _two_temperature,
    "perturbed": _perturbed,
}


def build_scenario(config: RunConfig):
    """Initial state and the effective config (amplitudes after any capping)."""
    try:
        builder = _BUILDERS[config.scenario]
    except KeyError:
        raise ConfigError(f"scenario: unknown scenario {config.scenario!r}") from None
    return builder(config, config.grid())


def init_scenario(config: RunConfig) -> SystemState:
    return build_scenario(config)[0]
