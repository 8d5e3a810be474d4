"""Averaged quantities, Lyapunov / energy functionals and run-level checks.

Kinetic integrals are exact sums over the particle measure; fluid integrals
are cell sums times ``h^N``.  Gradients of grid fields are centred
differences (see :mod:`kinfluid.fluid`).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .bogovskii import bogovskii, bogovskii_div_form
from .coupling import SystemState
from .fluid import divergence, gradient, jacobian
from .state import CICStencil, GridSpec, ModelParams, derive_velocity


def grid_of(state: SystemState) -> GridSpec:
    rho = state.fluid.rho
    return GridSpec(rho.ndim, rho.shape[0])


def _params(params: Optional[ModelParams]) -> ModelParams:
    return params if params is not None else ModelParams()


@dataclass(frozen=True)
class AveragedQuantities:
    f_c: float
    rho_c: float
    v_c: np.ndarray
    m_c: np.ndarray
    u_c: np.ndarray
    v_infinity: np.ndarray


def total_momentum(state: SystemState) -> np.ndarray:
    grid = grid_of(state)
    fluid = np.sum(state.fluid.momentum.reshape(grid.dim, -1), axis=1) * grid.cell_volume
    return state.particles.momentum + fluid


def predicted_limit(state: SystemState) -> np.ndarray:
    """Common velocity that momentum conservation forces on an aligned state.

    ``(int v f + int m) / (f_c + rho_c)``; evaluate it on the initial data.
    """
    grid = grid_of(state)
    f_c = state.particles.total_weight
    rho_c = grid.integrate(state.fluid.rho)
    return total_momentum(state) / (f_c + rho_c)


def averaged_quantities(
    state: SystemState,
    params: Optional[ModelParams] = None,
    initial: Optional[SystemState] = None,
) -> AveragedQuantities:
    params = _params(params)
    grid = grid_of(state)
    f_c = state.particles.total_weight
    rho_c = grid.integrate(state.fluid.rho)
    if not (f_c > 0 and rho_c > 0):
        raise ValueError("averaged quantities need positive kinetic and fluid mass")
    vol = grid.cell_volume
    v_c = state.particles.momentum / f_c
    m_c = np.sum(state.fluid.momentum.reshape(grid.dim, -1), axis=1) * vol / rho_c
    u = derive_velocity(state.fluid, params)
    u_c = np.sum(u.reshape(grid.dim, -1), axis=1) * vol
    v_inf = predicted_limit(initial if initial is not None else state)
    return AveragedQuantities(f_c, rho_c, v_c, m_c, u_c, v_inf)


def _kinetic_variance(state: SystemState, v_c) -> float:
    p = state.particles
    return float(np.sum(p.weights * np.sum((p.velocities - v_c) ** 2, axis=1)))


def _fluid_fluctuation(state: SystemState, u, m_c, grid) -> float:
    du = u - m_c.reshape((-1,) + (1,) * grid.dim)
    return grid.integrate(state.fluid.rho * np.sum(du ** 2, axis=0))


def lyapunov_L(state: SystemState, params: Optional[ModelParams] = None) -> float:
    """Velocity variance + fluid fluctuation + density fluctuation + mean gap."""
    params = _params(params)
    grid = grid_of(state)
    avg = averaged_quantities(state, params)
    u = derive_velocity(state.fluid, params)
    return (
        _kinetic_variance(state, avg.v_c)
        + _fluid_fluctuation(state, u, avg.m_c, grid)
        + grid.integrate((state.fluid.rho - avg.rho_c) ** 2)
        + float(np.sum((avg.v_c - avg.m_c) ** 2))
    )


def total_energy(state: SystemState, gamma: float, params: Optional[ModelParams] = None) -> float:
    params = _params(params)
    grid = grid_of(state)
    p = state.particles
    u = derive_velocity(state.fluid, params)
    rho = state.fluid.rho
    return (
        float(np.sum(p.weights * np.sum(p.velocities ** 2, axis=1)))
        + grid.integrate(rho * np.sum(u ** 2, axis=0))
        + 2.0 / (gamma - 1.0) * grid.integrate(rho ** gamma)
    )


# Pressure deviation f(r; r0) = r * int_{r0}^{r} (s^gamma - r0^gamma) / s^2 ds.
# Substituting s = r0 * exp(t) turns the integrand into the smooth
# r0^(gamma-1) * (exp((gamma-1) t) - exp(-t)) on [0, log(r/r0)].


def _log_integrand(t, r0, gamma):
    return r0 ** (gamma - 1.0) * (np.exp((gamma - 1.0) * t) - np.exp(-t))


def pressure_deviation(rho: float, rho_c: float, gamma: float) -> float:
    """``f(rho; rho_c)`` by adaptive Gauss-Kronrod quadrature."""
    if rho < 0:
        raise ValueError("pressure deviation needs rho >= 0")
    if not (rho_c > 0 and gamma > 1):
        raise ValueError("pressure deviation needs rho_c > 0 and gamma > 1")
    if rho == 0:
        return float(rho_c ** gamma)
    if rho == rho_c:
        return 0.0
    top = np.log(rho / rho_c)
    val, _ = integrate.quad(
        _log_integrand, 0.0, top, args=(rho_c, gamma), epsabs=0.0, epsrel=1e-13, limit=200
    )
    return float(rho * val)


def pressure_deviation_field(rho, rho_c: float, gamma: float) -> np.ndarray:
    """Cellwise ``f(rho; rho_c)`` with one vectorised adaptive quadrature."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("pressure deviation needs rho >= 0")
    out = np.zeros_like(rho)
    zero = rho == 0
    out[zero] = rho_c ** gamma
    live = ~zero & (rho != rho_c)
    if np.any(live):
        r = rho[live]
        top = np.log(r / rho_c)
        # integrate over unit interval, t = tau * top
        val, _ = integrate.quad_vec(
            lambda tau: top * _log_integrand(tau * top, rho_c, gamma),
            0.0,
            1.0,
            epsabs=0.0,
            epsrel=1e-12,
            norm="max",
        )
        out[live] = r * val
    return out


def interacting_energy(state: SystemState, params: Optional[ModelParams] = None) -> float:
    """Energy-like functional built on the pressure deviation instead of ``rho^gamma``."""
    params = _params(params)
    grid = grid_of(state)
    avg = averaged_quantities(state, params)
    u = derive_velocity(state.fluid, params)
    gap = float(np.sum((avg.m_c - avg.v_c) ** 2))
    return (
        _kinetic_variance(state, avg.v_c)
        + _fluid_fluctuation(state, u, avg.m_c, grid)
        + 2.0 * grid.integrate(pressure_deviation_field(state.fluid.rho, avg.rho_c, params.gamma))
        + avg.f_c / (2.0 * (avg.f_c + avg.rho_c)) * gap
    )


def _slip(state: SystemState, u, grid, stencil=None):
    """``u(x_p) - v_p`` for every particle."""
    stencil = stencil or CICStencil(state.particles.positions, grid)
    return stencil.gather(u) - state.particles.velocities


def dissipation_D(state: SystemState, params: Optional[ModelParams] = None) -> float:
    params = _params(params)
    grid = grid_of(state)
    u = derive_velocity(state.fluid, params)
    grad_sq = grid.integrate(jacobian(u, grid) ** 2)
    div_sq = grid.integrate(divergence(u, grid) ** 2)
    g = _slip(state, u, grid)
    drag = float(np.sum(state.particles.weights * np.sum(g ** 2, axis=1)))
    return params.mu * grad_sq + (params.mu + params.lam) * div_sq + drag


def mc_prime(state: SystemState, params: Optional[ModelParams] = None) -> np.ndarray:
    """Time derivative of ``m_c`` from the momentum balance."""
    params = _params(params)
    grid = grid_of(state)
    u = derive_velocity(state.fluid, params)
    g = _slip(state, u, grid)
    rho_c = grid.integrate(state.fluid.rho)
    return -(state.particles.weights @ g) / rho_c


def vc_prime(state: SystemState, params: Optional[ModelParams] = None) -> np.ndarray:
    params = _params(params)
    grid = grid_of(state)
    u = derive_velocity(state.fluid, params)
    g = _slip(state, u, grid)
    return (state.particles.weights @ g) / state.particles.total_weight


@dataclass(frozen=True)
class PerturbedFunctionals:
    E_sigma: float
    D_sigma: float
    J: tuple


def perturbed_functionals(
    state: SystemState,
    params: Optional[ModelParams] = None,
    sigma: Optional[float] = None,
) -> PerturbedFunctionals:
    """Energy and dissipation corrected by the Bogovskii density term.

    Returns ``E_sigma`` and the nine dissipation pieces ``J_1 .. J_9`` with
    ``D_sigma = sum(J)`` and ``J_1 = D``.
    """
    params = _params(params)
    sigma = params.sigma if sigma is None else sigma
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    grid = grid_of(state)
    vol_shape = (-1,) + (1,) * grid.dim
    rho = state.fluid.rho
    m = state.fluid.momentum
    u = derive_velocity(state.fluid, params)
    avg = averaged_quantities(state, params)
    m_c = avg.m_c.reshape(vol_shape)
    drho = rho - avg.rho_c
    B = bogovskii(drho, grid)
    stencil = CICStencil(state.particles.positions, grid)
    g = _slip(state, u, grid, stencil)
    w = state.particles.weights
    du = u - m_c

    D = dissipation_D(state, params)
    E = interacting_energy(state, params)
    E_sigma = E - 2.0 * sigma * grid.integrate(rho * np.sum(du * B, axis=0))

    grad_u = jacobian(u, grid)
    s = np.sum(du * B, axis=0)
    J2 = sigma * grid.integrate(np.sum(m * gradient(s, grid), axis=0))
    u_grad_u = np.einsum("j...,ij...->i...", u, grad_u)
    J3 = -sigma * grid.integrate(rho * np.sum(u_grad_u * B, axis=0))
    J4 = sigma * grid.integrate(drho * (rho ** params.gamma - avg.rho_c ** params.gamma))
    J5 = -sigma * params.mu * grid.integrate(grad_u * jacobian(B, grid))
    J6 = sigma * float(np.sum(w * np.sum(g * stencil.gather(B), axis=1)))
    J7 = -sigma * (params.mu + params.lam) * grid.integrate(divergence(u, grid) * drho)
    rho_B = np.sum((rho * B).reshape(grid.dim, -1), axis=1) * grid.cell_volume
    J8 = -sigma * float(mc_prime(state, params) @ rho_B)
    J9 = -sigma * grid.integrate(rho * np.sum(du * bogovskii_div_form(m, grid), axis=0))
    J = (D, J2, J3, J4, J5, J6, J7, J8, J9)
    return PerturbedFunctionals(E_sigma=E_sigma, D_sigma=float(sum(J)), J=tuple(float(j) for j in J))


def bl_distance_bound(state: SystemState) -> float:
    """Upper bound on the bounded-Lipschitz distance to the monokinetic state."""
    p = state.particles
    v_c = p.momentum / p.total_weight
    return float(np.sqrt(_kinetic_variance(state, v_c) * p.total_weight))


def bounded_lipschitz_estimate(
    state: SystemState, n_tests: int = 2000, rng=None
) -> float:
    """Brute-force lower estimate of the bounded-Lipschitz distance.

    Compares the particle measure with the same spatial mass concentrated at
    ``v_c``, maximising over random test functions that are bounded by 1
    and 1-Lipschitz: clipped affine ramps and clipped distance cones in
    velocity, and products with a spatial cosine scaled to stay 1-Lipschitz.
    """
    rng = np.random.default_rng(rng)
    p = state.particles
    x, v, w = p.positions, p.velocities, p.weights
    v_c = p.momentum / p.total_weight
    N = p.dim
    best = 0.0
    for _ in range(n_tests):
        e = rng.normal(size=N)
        e /= np.linalg.norm(e)
        kind = rng.integers(3)
        if kind == 0:
            c = rng.normal()

            def phi(vel, x=x):
                return np.clip((vel - v_c) @ e + c, -1.0, 1.0)
        elif kind == 1:
            centre = v_c + rng.normal(size=N)
            r = rng.uniform(0, 2)

            def phi(vel, x=x):
                return np.clip(np.linalg.norm(vel - centre, axis=-1) - r, -1.0, 1.0)
        else:
            k = rng.normal(size=N)
            k /= np.linalg.norm(k)
            # 0.5 + spatial lies in [0, 1] with gradient at most pi
            spatial = 0.5 * np.cos(2 * np.pi * (x @ k))

            def phi(vel, spatial=spatial):
                ramp = np.clip((vel - v_c) @ e, -1.0, 1.0)
                return ramp * (0.5 + spatial) / (1.0 + np.pi)

        diff = abs(float(np.sum(w * (phi(v) - phi(np.broadcast_to(v_c, v.shape))))))
        best = max(best, diff)
    return best


def density_fluctuation(state: SystemState) -> float:
    grid = grid_of(state)
    rho = state.fluid.rho
    return grid.integrate((rho - grid.integrate(rho)) ** 2)


@dataclass(frozen=True)
class FunctionalRow:
    t: float
    mass_fluid: float
    mass_kinetic: float
    total_momentum: tuple
    v_c: tuple
    m_c: tuple
    u_c: tuple
    E_total: float
    L: float
    E_int: float
    D: float
    E_sigma: float
    D_sigma: float
    J: tuple
    bl_bound: float
    rho_min: float
    rho_max: float
    u_max: float

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("total_momentum", "v_c", "m_c", "u_c", "J"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FunctionalRow":
        d = dict(d)
        for k in ("total_momentum", "v_c", "m_c", "u_c", "J"):
            d[k] = tuple(float(x) for x in d[k])
        return cls(**d)


def functional_row(state: SystemState, params: Optional[ModelParams] = None) -> FunctionalRow:
    params = _params(params)
    grid = grid_of(state)
    avg = averaged_quantities(state, params)
    pert = perturbed_functionals(state, params)
    u = derive_velocity(state.fluid, params)
    return FunctionalRow(
        t=float(state.time),
        mass_fluid=avg.rho_c,
        mass_kinetic=avg.f_c,
        total_momentum=tuple(float(x) for x in total_momentum(state)),
        v_c=tuple(float(x) for x in avg.v_c),
        m_c=tuple(float(x) for x in avg.m_c),
        u_c=tuple(float(x) for x in avg.u_c),
        E_total=total_energy(state, params.gamma, params),
        L=lyapunov_L(state, params),
        E_int=interacting_energy(state, params),
        D=pert.J[0],
        E_sigma=pert.E_sigma,
        D_sigma=pert.D_sigma,
        J=pert.J,
        bl_bound=bl_distance_bound(state),
        rho_min=float(np.min(state.fluid.rho)),
        rho_max=float(np.max(state.fluid.rho)),
        u_max=float(np.max(np.sqrt(np.sum(u ** 2, axis=0)))),
    )


@dataclass(frozen=True)
class ConservationReport:
    mass_fluid_drift: float
    mass_kinetic_drift: float
    momentum_drift: float
    max_energy_increase: float
    max_E_sigma_increase: float

    def to_dict(self) -> dict:
        return asdict(self)


def _rel(values, ref) -> float:
    scale = np.linalg.norm(ref)
    scale = scale if scale > 0 else 1.0
    return float(max(np.linalg.norm(np.asarray(v) - ref) for v in values) / scale)


def conservation_report(history: Sequence[FunctionalRow]) -> ConservationReport:
    """Drifts are relative to the first row (absolute if that value is zero);
    energy increases are the largest positive jump between consecutive rows."""
    if not history:
        raise ValueError("conservation report needs a non-empty history")
    first = history[0]

    def max_jump(vals):
        jumps = np.diff(np.asarray(vals, dtype=float))
        return float(max(0.0, jumps.max())) if jumps.size else 0.0

    return ConservationReport(
        mass_fluid_drift=_rel([r.mass_fluid for r in history], first.mass_fluid),
        mass_kinetic_drift=_rel([r.mass_kinetic for r in history], first.mass_kinetic),
        momentum_drift=_rel(
            [np.array(r.total_momentum) for r in history], np.array(first.total_momentum)
        ),
        max_energy_increase=max_jump([r.E_total for r in history]),
        max_E_sigma_increase=max_jump([r.E_sigma for r in history]),
    )


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    window: tuple
    samples: int

    def to_dict(self) -> dict:
        return asdict(self) | {"window": list(self.window)}


def decay_fit(
    series,
    window: Optional[tuple] = None,
    drop_fraction: float = 0.2,
    min_samples: int = 10,
) -> DecayFit:
    """Least-squares fit ``log L = a - rate * t``.

    Without an explicit ``window`` the first ``drop_fraction`` of the time
    span is discarded as transient.  ``r_squared`` is reported as 0 for a
    constant series.
    """
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("series must be a sequence of (t, L) pairs")
    t, L = data[:, 0], data[:, 1]
    if window is None:
        t0 = t.min() + drop_fraction * (t.max() - t.min())
        window = (float(t0), float(t.max()))
    sel = (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(sel) < min_samples:
        raise ValueError(
            f"decay fit undefined: {np.count_nonzero(sel)} samples in window, need {min_samples}"
        )
    t, L = t[sel], L[sel]
    if np.any(L <= 0):
        raise ValueError("decay fit undefined: non-positive values in the fit window")
    y = np.log(L)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # a constant series has ss_tot == 0 up to round-off in log
    if ss_tot <= 1e-28 * max(1.0, float(np.sum(y ** 2))):
        return DecayFit(0.0, 0.0, tuple(window), int(t.size))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return DecayFit(float(-slope), r2, tuple(window), int(t.size))


@dataclass
class EmpiricalBrackets:
    """Running min/max of the ratios the decay argument relies on."""

    E_over_L: list = field(default_factory=lambda: [np.inf, -np.inf])
    E_sigma_over_L: list = field(default_factory=lambda: [np.inf, -np.inf])
    L_over_D_plus_density: float = 0.0
    E_sigma_positive: bool = True

    def update(self, row: FunctionalRow, density_fluct: float) -> None:
        if row.L > 0:
            for bracket, val in ((self.E_over_L, row.E_int), (self.E_sigma_over_L, row.E_sigma)):
                ratio = val / row.L
                bracket[0] = min(bracket[0], ratio)
                bracket[1] = max(bracket[1], ratio)
            self.E_sigma_positive &= row.E_sigma > 0
            denom = row.D + density_fluct
            if denom > 0:
                self.L_over_D_plus_density = max(self.L_over_D_plus_density, row.L / denom)

    def to_dict(self) -> dict:
        return {
            "E_over_L": [float(x) for x in self.E_over_L],
            "E_sigma_over_L": [float(x) for x in self.E_sigma_over_L],
            "L_over_D_plus_density_max": float(self.L_over_D_plus_density),
            "E_sigma_positive": bool(self.E_sigma_positive),
        }
