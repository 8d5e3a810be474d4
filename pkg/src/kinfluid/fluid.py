"""Compressible isentropic Navier-Stokes right-hand side on the periodic grid.

All spatial operators are second-order centred differences with periodic
wrap.  First derivatives use the wide stencil ``(a[i+1] - a[i-1]) / 2h`` so
every flux divergence telescopes to zero over the torus; the Laplacian uses
the compact three-point stencil, which is what damps grid-scale modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import FluidState, GridSpec, ModelParams, ParticleEnsemble, derive_velocity


def ddx(a, axis: int, h: float) -> np.ndarray:
    """Centred first derivative along array ``axis``."""
    return (np.roll(a, -1, axis) - np.roll(a, 1, axis)) / (2.0 * h)


def gradient(a, grid: GridSpec) -> np.ndarray:
    """Gradient of a scalar field, shape ``(N,) + grid.shape``."""
    return np.stack([ddx(a, ax, grid.h) for ax in range(grid.dim)])


def divergence(v, grid: GridSpec) -> np.ndarray:
    """Divergence of a vector field laid out ``(N,) + grid.shape``."""
    return sum(ddx(v[ax], ax, grid.h) for ax in range(grid.dim))


def jacobian(v, grid: GridSpec) -> np.ndarray:
    """``J[i, j] = d v_i / d x_j``."""
    return np.stack([gradient(v[i], grid) for i in range(v.shape[0])])


def laplacian(a, grid: GridSpec) -> np.ndarray:
    """Compact Laplacian of a scalar field."""
    h2 = grid.h ** 2
    out = np.zeros_like(a)
    for ax in range(grid.dim):
        out += (np.roll(a, -1, ax) - 2.0 * a + np.roll(a, 1, ax)) / h2
    return out


def lame_operator(u, mu: float, lam: float, grid: GridSpec) -> np.ndarray:
    """``Lu = -mu Lap u - (mu + lam) grad div u``."""
    if not 2 * mu + lam > 0:
        raise ValueError("Lame operator needs 2*mu + lambda > 0")
    u = np.asarray(u, dtype=float)
    lap = np.stack([laplacian(u[i], grid) for i in range(grid.dim)])
    grad_div = gradient(divergence(u, grid), grid)
    return -mu * lap - (mu + lam) * grad_div


@dataclass(frozen=True)
class FluidRhs:
    d_rho: np.ndarray
    d_momentum: np.ndarray


def fluid_rhs(
    fluid: FluidState, drag_force, params: ModelParams, grid: GridSpec
) -> FluidRhs:
    """Time derivative of ``(rho, m)`` with an external momentum source.

    ``drag_force`` is the field returned by
    :func:`kinfluid.coupling.drag_exchange_field` (or zeros).
    """
    drag_force = np.asarray(drag_force, dtype=float)
    if not fluid.is_finite() or not np.all(np.isfinite(drag_force)):
        raise FloatingPointError("non-finite value in fluid state or drag force")
    rho, m = fluid.rho, fluid.momentum
    u = derive_velocity(fluid, params)
    h = grid.h

    d_rho = -divergence(m, grid)

    pressure = rho ** params.gamma
    d_m = np.empty_like(m)
    for i in range(grid.dim):
        flux_div = sum(ddx(m[i] * u[j], j, h) for j in range(grid.dim))
        d_m[i] = -flux_div - ddx(pressure, i, h)
    d_m -= lame_operator(u, params.mu, params.lam, grid)
    d_m += drag_force
    return FluidRhs(d_rho=d_rho, d_momentum=d_m)


def sound_speed(rho, gamma: float) -> np.ndarray:
    return np.sqrt(gamma * np.maximum(rho, 0.0) ** (gamma - 1.0))


def stable_timestep(
    fluid: FluidState,
    particles: ParticleEnsemble,
    params: ModelParams,
    grid: GridSpec,
) -> float:
    """Explicit step limited by advection, viscosity and drag relaxation.

    The viscous limit uses ``max(2 mu + lam, mu)``; the two agree whenever
    ``lam >= -mu``.
    """
    u = derive_velocity(fluid, params)
    speed = np.sqrt(np.sum(u ** 2, axis=0))
    wave = np.max(speed) + np.max(sound_speed(fluid.rho, params.gamma))
    advective = grid.h / max(wave, 1e-300)
    nu = max(2 * params.mu + params.lam, params.mu)
    rho_min = max(float(np.min(fluid.rho)), params.rho_floor)
    viscous = grid.h ** 2 * rho_min / (2 * grid.dim * nu)
    dt = params.cfl * min(advective, viscous, 0.5)
    if not (np.isfinite(dt) and dt > 0):
        raise FloatingPointError(f"stable timestep is not positive and finite: {dt!r}")
    return float(dt)
