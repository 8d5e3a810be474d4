"""Drag exchange between the ensemble and the fluid, and the coupled step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fluid import fluid_rhs, sound_speed
from .kinetic import particle_rhs
from .state import (
    CICStencil,
    FluidState,
    GridSpec,
    ModelParams,
    ParticleEnsemble,
    derive_velocity,
)


class InstabilityError(RuntimeError):
    """Raised when a step blows up; ``history`` may be attached by the caller."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
        self.history = None


@dataclass(frozen=True)
class SystemState:
    fluid: FluidState
    particles: ParticleEnsemble
    time: float = 0.0

    def __post_init__(self):
        if self.fluid.dim != self.particles.dim:
            raise ValueError("fluid and particles live in different dimensions")
        if not self.time >= 0:
            raise ValueError("time must be non-negative")


def _exchange(stencil: CICStencil, weights, g) -> np.ndarray:
    return stencil.deposit(-weights[:, None] * g)


def drag_exchange_field(particles: ParticleEnsemble, u_field, grid: GridSpec) -> np.ndarray:
    """Fluid momentum source ``-sum_p w_p (u(x_p) - v_p) S(x - x_p) / h^N``."""
    if particles is None or len(particles) == 0:
        return np.zeros(grid.vector_shape)
    stencil = CICStencil(particles.positions, grid)
    g = stencil.gather(u_field) - particles.velocities
    return _exchange(stencil, particles.weights, g)


def _stage(state: SystemState, params: ModelParams, grid: GridSpec):
    """Joint right-hand side; both subsystems see the same ``u`` and ``v``."""
    particles = state.particles
    u = derive_velocity(state.fluid, params)
    stencil = CICStencil(particles.positions, grid)
    dx, dv, g = particle_rhs(particles, u, params, grid, stencil)
    drag = _exchange(stencil, particles.weights, g)
    frhs = fluid_rhs(state.fluid, drag, params, grid)
    return dx, dv, frhs.d_rho, frhs.d_momentum


def _advance(state: SystemState, rates, dt: float, time: float) -> SystemState:
    dx, dv, d_rho, d_m = rates
    fluid = FluidState(state.fluid.rho + dt * d_rho, state.fluid.momentum + dt * d_m)
    particles = state.particles.replace(
        positions=state.particles.positions + dt * dx,
        velocities=state.particles.velocities + dt * dv,
    )
    return SystemState(fluid, particles, time)


def _max_speeds(state: SystemState, params: ModelParams):
    u = derive_velocity(state.fluid, params)
    umax = float(np.max(np.sqrt(np.sum(u ** 2, axis=0))))
    vmax = float(np.max(np.linalg.norm(state.particles.velocities, axis=1)))
    return umax, vmax


def coupled_step(
    state: SystemState, params: ModelParams, grid: GridSpec, dt: float
) -> SystemState:
    """One explicit midpoint (RK2) step of the full kinetic-fluid system.

    Raises :class:`InstabilityError` when the state turns non-finite or
    ``max|u|`` / ``max|v|`` jumps by more than 10x in one step.  The growth
    test is measured against ``max(previous speed, max sound speed)`` so that
    starting from rest is not flagged.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = _stage(state, params, grid)
    mid = _advance(state, k1, 0.5 * dt, state.time + 0.5 * dt)
    k2 = _stage(mid, params, grid)
    new = _advance(state, k2, dt, state.time + dt)

    if not (new.fluid.is_finite() and np.all(np.isfinite(new.particles.velocities))):
        raise InstabilityError(f"non-finite state at t={new.time:.6g}", state)
    u0, v0 = _max_speeds(state, params)
    u1, v1 = _max_speeds(new, params)
    c0 = float(np.max(sound_speed(state.fluid.rho, params.gamma)))
    if u1 > 10 * max(u0, c0) or v1 > 10 * max(v0, c0):
        raise InstabilityError(
            f"instability at t={new.time:.6g}: max|u| {u0:.3g} -> {u1:.3g}, "
            f"max|v| {v0:.3g} -> {v1:.3g}",
            state,
        )
    return new
