"""Spectral periodic Poisson solver and the curl-free Bogovskii operator.

On the unit torus the unique curl-free, zero-mean solution of
``div nu = f`` is ``nu = -grad (-Lap)^{-1} f``; everything here is done in
Fourier space with integer wavenumbers ``k`` (physical wavenumber ``2 pi k``).

For even ``n`` the derivative of the Nyquist mode is set to zero so that
real inputs give real outputs.  The Poisson symbol keeps the full ``|k|^2``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import fft

from .parallel import fft_workers
from .state import GridSpec

TWO_PI = 2.0 * np.pi


@lru_cache(maxsize=16)
def _symbols(grid: GridSpec):
    k = fft.fftfreq(grid.n, d=1.0 / grid.n)
    kd = k.copy()
    if grid.n % 2 == 0:
        kd[grid.n // 2] = 0.0
    K = np.stack(np.meshgrid(*([k] * grid.dim), indexing="ij"))
    KD = np.stack(np.meshgrid(*([kd] * grid.dim), indexing="ij"))
    k2 = np.sum(K ** 2, axis=0)
    inv_k2 = np.zeros_like(k2)
    inv_k2[k2 > 0] = 1.0 / k2[k2 > 0]
    for a in (KD, k2, inv_k2):
        a.setflags(write=False)
    return KD, k2, inv_k2


def _grid_for(a, vector: bool = False) -> GridSpec:
    shape = a.shape[1:] if vector else a.shape
    return GridSpec(len(shape), shape[0])


def _fwd(a):
    return fft.fftn(a, workers=fft_workers())


def _inv(a):
    return fft.ifftn(a, workers=fft_workers()).real


def check_zero_mean(f, grid: Optional[GridSpec] = None, tol: float = 1e-12) -> None:
    f = np.asarray(f, dtype=float)
    grid = grid or _grid_for(f)
    mean = abs(grid.integrate(f))
    if mean > tol * (grid.integrate(np.abs(f)) + 1.0):
        raise ValueError(f"nonzero mean: integral of source is {mean:.3e}")


def solve_poisson_periodic(f, grid: Optional[GridSpec] = None) -> np.ndarray:
    """Zero-mean solution of ``-Lap phi = f``."""
    f = np.asarray(f, dtype=float)
    grid = grid or _grid_for(f)
    check_zero_mean(f, grid)
    _, _, inv_k2 = _symbols(grid)
    phi_hat = _fwd(f)
    return _inv(phi_hat * inv_k2 / TWO_PI ** 2)


def spectral_gradient(phi, grid: Optional[GridSpec] = None) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    grid = grid or _grid_for(phi)
    KD, _, _ = _symbols(grid)
    ph = _fwd(phi)
    return np.stack([_inv(1j * TWO_PI * KD[j] * ph) for j in range(grid.dim)])


def spectral_divergence(v, grid: Optional[GridSpec] = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    grid = grid or _grid_for(v, vector=True)
    KD, _, _ = _symbols(grid)
    acc = sum(1j * TWO_PI * KD[j] * _fwd(v[j]) for j in range(grid.dim))
    return _inv(acc)


def spectral_curl(v, grid: Optional[GridSpec] = None) -> np.ndarray:
    """All antisymmetric components ``d_i v_j - d_j v_i`` with ``i < j``.

    Returns an array of shape ``(N(N-1)/2,) + grid.shape``; empty in 1-D.
    """
    v = np.asarray(v, dtype=float)
    grid = grid or _grid_for(v, vector=True)
    KD, _, _ = _symbols(grid)
    vh = [_fwd(v[j]) for j in range(grid.dim)]
    comps = [
        _inv(1j * TWO_PI * (KD[i] * vh[j] - KD[j] * vh[i]))
        for i in range(grid.dim)
        for j in range(i + 1, grid.dim)
    ]
    if not comps:
        return np.zeros((0,) + grid.shape)
    return np.stack(comps)


def bogovskii(f, grid: Optional[GridSpec] = None, check: bool = False) -> np.ndarray:
    """Curl-free zero-mean ``nu`` with ``div nu = f``; ``f`` must have zero mean.

    With ``check=True`` the result is verified against the defining system
    and an ``AssertionError`` is raised if any residual exceeds ``1e-10``
    relative to ``max|f|``.
    """
    f = np.asarray(f, dtype=float)
    grid = grid or _grid_for(f)
    check_zero_mean(f, grid)
    KD, _, inv_k2 = _symbols(grid)
    fh = _fwd(f)
    # nu_hat = -i 2pi k f_hat / (4 pi^2 |k|^2)
    nu = np.stack([_inv(-1j * KD[j] * inv_k2 * fh / TWO_PI) for j in range(grid.dim)])
    if check:
        res = exactness_residuals(f, nu, grid)
        scale = max(float(np.max(np.abs(f))), 1.0)
        assert max(res.values()) <= 1e-10 * scale, f"Bogovskii residuals {res}"
    return nu


def exactness_residuals(f, nu, grid: Optional[GridSpec] = None) -> dict:
    """Max-norm residuals of ``div nu = f``, ``curl nu = 0`` and ``mean nu = 0``."""
    nu = np.asarray(nu, dtype=float)
    grid = grid or _grid_for(nu, vector=True)
    curl = spectral_curl(nu, grid)
    return {
        "divergence": float(np.max(np.abs(spectral_divergence(nu, grid) - f))),
        "curl": float(np.max(np.abs(curl))) if curl.size else 0.0,
        "mean": float(np.max(np.abs(np.sum(nu, axis=tuple(range(1, nu.ndim)))))) * grid.cell_volume,
    }


def bogovskii_div_form(g, grid: Optional[GridSpec] = None) -> np.ndarray:
    """``B[div g]`` computed directly as ``nu_hat = k (k . g_hat) / |k|^2``."""
    g = np.asarray(g, dtype=float)
    grid = grid or _grid_for(g, vector=True)
    KD, _, inv_k2 = _symbols(grid)
    kg = sum(KD[j] * _fwd(g[j]) for j in range(grid.dim)) * inv_k2
    return np.stack([_inv(KD[j] * kg) for j in range(grid.dim)])


def l2_norm(a, grid: GridSpec) -> float:
    return float(np.sqrt(grid.integrate(np.asarray(a) ** 2)))


def h1_norm(v, grid: Optional[GridSpec] = None) -> float:
    """Discrete ``H^1`` norm of a vector field, derivatives taken spectrally."""
    v = np.asarray(v, dtype=float)
    grid = grid or _grid_for(v, vector=True)
    total = grid.integrate(v ** 2)
    for comp in v:
        total += grid.integrate(spectral_gradient(comp, grid) ** 2)
    return float(np.sqrt(total))
