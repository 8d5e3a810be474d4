import numpy as np
import pytest

from kinfluid.config import RunConfig
from kinfluid.coupling import InstabilityError, SystemState, coupled_step, drag_exchange_field
from kinfluid.diagnostics import averaged_quantities, total_momentum
from kinfluid.scenarios import init_scenario
from kinfluid.state import (
    AlignmentKernel,
    FluidState,
    GridSpec,
    LocalAlignment,
    ModelParams,
    NonlocalAlignment,
    ParticleEnsemble,
    interpolate_field,
)


def _run(state, params, grid, dt, steps):
    for _ in range(steps):
        state = coupled_step(state, params, grid, dt)
    return state


def test_drag_field_matched_velocities_zero():
    rng = np.random.default_rng(0)
    g = GridSpec(2, 8)
    u = rng.standard_normal(g.vector_shape)
    x = rng.random((30, 2))
    v = interpolate_field(u, x, g)
    field = drag_exchange_field(ParticleEnsemble(x, v, np.ones(30)), u, g)
    np.testing.assert_allclose(field, 0.0, atol=1e-13)


def test_drag_field_single_particle_at_node():
    g = GridSpec(1, 4)
    u = np.ones((1, 4))
    p = ParticleEnsemble([[0.625]], [[0.0]], [1.0])
    field = drag_exchange_field(p, u, g)
    np.testing.assert_allclose(field[0], [0, 0, -4, 0], atol=1e-14)


def test_drag_field_empty():
    g = GridSpec(2, 4)
    np.testing.assert_array_equal(drag_exchange_field(None, np.ones(g.vector_shape), g), 0.0)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_drag_field_antisymmetry(dim):
    rng = np.random.default_rng(dim)
    g = GridSpec(dim, 6)
    u = rng.standard_normal(g.vector_shape)
    p = ParticleEnsemble(rng.random((50, dim)), rng.standard_normal((50, dim)), rng.uniform(0.5, 2, 50))
    field = drag_exchange_field(p, u, g)
    slip = interpolate_field(u, p.positions, g) - p.velocities
    expected = -(p.weights @ slip)
    got = np.array([g.integrate(c) for c in field])
    scale = np.sum(p.weights * np.linalg.norm(slip, axis=1))
    assert np.max(np.abs(got - expected)) <= 1e-13 * scale


def test_system_state_validation():
    g = GridSpec(2, 4)
    fluid = FluidState(np.ones(g.shape), np.zeros(g.vector_shape))
    with pytest.raises(ValueError):
        SystemState(fluid, ParticleEnsemble([[0.1]], [[0.0]], [1.0]))
    with pytest.raises(ValueError):
        SystemState(fluid, ParticleEnsemble([[0.1, 0.2]], [[0.0, 0.0]], [1.0]), time=-1.0)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_equilibrium_fixed_point(dim):
    cfg = RunConfig(dimension=dim, grid_n=6, scenario="equilibrium", t_end=1.0)
    s0 = init_scenario(cfg)
    params = cfg.model_params()
    s1 = coupled_step(s0, params, cfg.grid(), 0.01)
    np.testing.assert_allclose(s1.fluid.rho, s0.fluid.rho, rtol=0, atol=1e-13)
    np.testing.assert_allclose(s1.fluid.momentum, 0.0, atol=1e-13)
    np.testing.assert_allclose(s1.particles.velocities, 0.0, atol=1e-13)
    np.testing.assert_allclose(s1.particles.positions, s0.particles.positions, atol=1e-13)
    assert s1.time == pytest.approx(0.01)


def test_homogeneous_relaxation_closed_form():
    cfg = RunConfig(dimension=1, grid_n=8, scenario="homogeneous_relaxation", t_end=1.0)
    state = _run(init_scenario(cfg), cfg.model_params(), cfg.grid(), 1e-3, 1000)
    avg = averaged_quantities(state)
    gap = avg.m_c[0] - avg.v_c[0]
    assert abs(gap / np.exp(-2.0) - 1) <= 0.02
    # momentum balance with f_c = rho_c fixes the mean at 1/2
    assert avg.v_c[0] + avg.m_c[0] == pytest.approx(1.0, abs=1e-12)


def test_two_temperature_variance_closed_form():
    cfg = RunConfig(dimension=2, grid_n=6, scenario="two_temperature", t_end=1.0)
    state = _run(init_scenario(cfg), cfg.model_params(), cfg.grid(), 1e-3, 1000)
    p = state.particles
    v_c = p.momentum / p.total_weight
    var = np.sum(p.weights * np.sum((p.velocities - v_c) ** 2, axis=1)) / p.total_weight
    assert abs(var / np.exp(-2.0) - 1) <= 0.02


@pytest.mark.parametrize("collision", [None, LocalAlignment(), NonlocalAlignment(AlignmentKernel("cosine_bump"))])
def test_conservation_over_thousand_steps(collision):
    cfg = RunConfig(dimension=2, grid_n=8, scenario="perturbed", t_end=1.0, particles_per_cell=2)
    state = init_scenario(cfg)
    params = ModelParams(collision=collision)
    g = cfg.grid()
    P0 = total_momentum(state)
    M0 = g.integrate(state.fluid.rho)
    W0 = state.particles.total_weight
    w0 = state.particles.weights.copy()
    state = _run(state, params, g, 2e-3, 1000)
    assert abs(g.integrate(state.fluid.rho) - M0) <= 1e-12 * M0
    assert abs(state.particles.total_weight - W0) <= 1e-12 * W0
    assert state.particles.weights.tobytes() == w0.tobytes()
    assert np.linalg.norm(total_momentum(state) - P0) <= 1e-10 * np.linalg.norm(P0)


def test_instability_detected():
    g = GridSpec(1, 8)
    cfg = RunConfig(dimension=1, grid_n=8, scenario="homogeneous_relaxation", t_end=1.0)
    state = init_scenario(cfg)
    with pytest.raises(InstabilityError) as info:
        _run(state, cfg.model_params(), g, 50.0, 3)
    assert info.value.state is not None


def test_coupled_step_rejects_bad_dt():
    cfg = RunConfig(dimension=1, grid_n=8, scenario="equilibrium", t_end=1.0)
    with pytest.raises(ValueError):
        coupled_step(init_scenario(cfg), cfg.model_params(), cfg.grid(), 0.0)
