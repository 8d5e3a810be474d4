import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinfluid.bogovskii import (
    bogovskii,
    bogovskii_div_form,
    check_zero_mean,
    exactness_residuals,
    h1_norm,
    l2_norm,
    solve_poisson_periodic,
    spectral_divergence,
    spectral_gradient,
)
from kinfluid.state import GridSpec

STABILITY_C = 1.0 + 1.0 / (2.0 * np.pi)


def band_limited(rng, grid, kmax=None):
    """Random real zero-mean field whose modes stay strictly below Nyquist."""
    kmax = kmax if kmax is not None else grid.n // 2 - 1
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    K = np.stack(np.meshgrid(*([k] * grid.dim), indexing="ij"))
    keep = np.all(np.abs(K) <= kmax, axis=0)
    keep.flat[0] = False
    coeff = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * keep
    return np.fft.ifftn(coeff).real * grid.num_cells


def test_poisson_zero():
    g = GridSpec(2, 8)
    np.testing.assert_array_equal(solve_poisson_periodic(np.zeros(g.shape)), 0.0)


def test_poisson_single_mode_1d():
    g = GridSpec(1, 32)
    x = g.centers()[0]
    phi = solve_poisson_periodic(np.sin(2 * np.pi * x))
    np.testing.assert_allclose(phi, np.sin(2 * np.pi * x) / (4 * np.pi**2), atol=1e-15)


def test_poisson_single_mode_2d():
    g = GridSpec(2, 16)
    x, y = g.centers()
    f = np.cos(2 * np.pi * x) * np.cos(4 * np.pi * y)
    np.testing.assert_allclose(solve_poisson_periodic(f), f / (4 * np.pi**2 * 5), atol=1e-15)


def test_poisson_rejects_nonzero_mean():
    with pytest.raises(ValueError, match="nonzero mean"):
        solve_poisson_periodic(np.ones(8) + np.sin(np.arange(8)))
    with pytest.raises(ValueError, match="nonzero mean"):
        bogovskii(np.full((4, 4), 1e-3))


def test_zero_mean_tolerance():
    f = np.sin(2 * np.pi * (np.arange(16) + 0.5) / 16)
    check_zero_mean(f + 1e-14)


def test_bogovskii_single_mode():
    g = GridSpec(1, 32)
    x = g.centers()[0]
    nu = bogovskii(np.sin(2 * np.pi * x))
    np.testing.assert_allclose(nu[0], -np.cos(2 * np.pi * x) / (2 * np.pi), atol=1e-13)


def test_bogovskii_zero():
    np.testing.assert_array_equal(bogovskii(np.zeros((6, 6, 6))), 0.0)


@pytest.mark.parametrize("dim,n", [(1, 32), (2, 32), (3, 16), (2, 15)])
def test_bogovskii_exactness_triple(dim, n):
    rng = np.random.default_rng(n + dim)
    g = GridSpec(dim, n)
    for _ in range(5):
        f = band_limited(rng, g)
        f /= np.max(np.abs(f))
        nu = bogovskii(f, g, check=True)
        res = exactness_residuals(f, nu, g)
        assert res["divergence"] <= 1e-11
        assert res["curl"] <= 1e-11
        assert res["mean"] <= 1e-13


def test_bogovskii_stability_bound():
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(100):
        dim = 1 + i % 3
        g = GridSpec(dim, (32, 32, 12)[dim - 1])
        f = band_limited(rng, g) * rng.uniform(0.1, 10)
        ratio = h1_norm(bogovskii(f, g), g) / l2_norm(f, g)
        worst = max(worst, ratio)
    assert worst <= STABILITY_C


def test_bogovskii_stability_bound_sharp_mode():
    g = GridSpec(2, 16)
    x, _ = g.centers()
    f = np.cos(2 * np.pi * x)
    ratio = h1_norm(bogovskii(f, g), g) / l2_norm(f, g)
    # lowest mode: sqrt(1/(4 pi^2) + 1)
    assert ratio == pytest.approx(np.sqrt(1 / (4 * np.pi**2) + 1), rel=1e-12)
    assert ratio <= STABILITY_C


@settings(max_examples=30, deadline=None)
@given(
    dim=st.integers(1, 3),
    alpha=st.floats(-10, 10),
    beta=st.floats(-10, 10),
    seed=st.integers(0, 2**32 - 1),
)
def test_bogovskii_linear(dim, alpha, beta, seed):
    rng = np.random.default_rng(seed)
    g = GridSpec(dim, 8)
    f, h = band_limited(rng, g), band_limited(rng, g)
    lhs = bogovskii(alpha * f + beta * h, g)
    rhs = alpha * bogovskii(f, g) + beta * bogovskii(h, g)
    scale = (abs(alpha) + abs(beta) + 1) * max(np.max(np.abs(bogovskii(f, g))), np.max(np.abs(bogovskii(h, g))))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_div_form_constant():
    g = GridSpec(3, 6)
    c = np.ones(g.vector_shape) * np.array([1.0, 2.0, -3.0])[:, None, None, None]
    np.testing.assert_allclose(bogovskii_div_form(c), 0.0, atol=1e-15)


def test_div_form_gradient_field_is_projected_onto_itself():
    g = GridSpec(2, 16)
    x, y = g.centers()
    phi = np.sin(2 * np.pi * x) * np.cos(4 * np.pi * y)
    grad = spectral_gradient(phi, g)
    nu = bogovskii_div_form(grad)
    # a curl-free zero-mean field is its own Bogovskii preimage
    np.testing.assert_allclose(nu, grad, atol=1e-12)
    np.testing.assert_allclose(nu, bogovskii(spectral_divergence(grad, g), g), atol=1e-12)


@pytest.mark.parametrize("dim,n", [(1, 32), (2, 32), (3, 12), (2, 9)])
def test_div_form_two_paths(dim, n):
    rng = np.random.default_rng(dim * n)
    g = GridSpec(dim, n)
    for _ in range(5):
        comps = np.stack([band_limited(rng, g) for _ in range(dim)])
        comps += rng.standard_normal((dim,) + (1,) * dim)
        a = bogovskii_div_form(comps, g)
        b = bogovskii(spectral_divergence(comps, g), g)
        assert np.max(np.abs(a - b)) <= 1e-11


def test_odd_and_even_real_outputs():
    for n in (9, 10):
        rng = np.random.default_rng(n)
        g = GridSpec(2, n)
        f = rng.standard_normal(g.shape)
        f -= f.mean()
        nu = bogovskii(f, g)
        assert nu.dtype == np.float64
        assert np.all(np.isfinite(nu))
