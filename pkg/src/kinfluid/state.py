"""Domain types and particle <-> grid transfer on the unit torus.

Fields live at cell centres ``x_i = (i + 1/2) h``.  A scalar field has shape
``(n,) * N``; a vector field has shape ``(N,) + (n,) * N`` (component first).
Particle positions have shape ``(P, N)``.

Deposition and interpolation share one cloud-in-cell (multilinear) stencil,
which makes them exact adjoints of each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np


def _frozen(a, dtype=float) -> np.ndarray:
    view = np.asarray(a, dtype=dtype).view()
    view.setflags(write=False)
    return view


def wrap_positions(x) -> np.ndarray:
    """Reduce coordinates modulo 1 into ``[0, 1)``."""
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    # np.mod maps tiny negatives to exactly 1.0
    x[x >= 1.0] = 0.0
    return x


@dataclass(frozen=True)
class GridSpec:
    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if int(self.n) != self.n or self.n < 4:
            raise ValueError(f"cells_per_axis must be an integer >= 4, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def vector_shape(self) -> tuple:
        return (self.dim,) + self.shape

    @property
    def num_cells(self) -> int:
        return self.n ** self.dim

    def centers(self) -> tuple:
        """Cell-centre coordinate arrays, one per axis (``indexing='ij'``)."""
        c = (np.arange(self.n) + 0.5) * self.h
        return tuple(np.meshgrid(*([c] * self.dim), indexing="ij"))

    def offsets(self) -> np.ndarray:
        """Periodic displacement of every node from node 0, shape ``(N,) + shape``.

        Components lie in ``(-1/2, 1/2]`` so that kernels see the short way
        round the torus.
        """
        k = np.arange(self.n)
        k = np.where(k > self.n // 2, k - self.n, k) * self.h
        return np.stack(np.meshgrid(*([k] * self.dim), indexing="ij"))

    def integrate(self, values) -> float:
        """Cell sum times cell volume (the torus integral of a grid field)."""
        return float(np.sum(values) * self.cell_volume)


@dataclass(frozen=True)
class FluidState:
    rho: np.ndarray
    momentum: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.rho)
        m = _frozen(self.momentum)
        if m.shape != (rho.ndim,) + rho.shape:
            raise ValueError(
                f"momentum shape {m.shape} does not match density shape {rho.shape}"
            )
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "momentum", m)

    @property
    def dim(self) -> int:
        return self.rho.ndim

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.rho)) and np.all(np.isfinite(self.momentum)))


@dataclass(frozen=True)
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.positions, dtype=float))
        v = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if x.shape[0] == 0:
            raise ValueError("particle ensemble is empty")
        if x.shape != v.shape or w.shape != (x.shape[0],):
            raise ValueError(
                f"inconsistent particle arrays: positions {x.shape}, "
                f"velocities {v.shape}, weights {w.shape}"
            )
        if not np.all(w > 0):
            raise ValueError("particle weights must be positive")
        object.__setattr__(self, "positions", _frozen(wrap_positions(x)))
        object.__setattr__(self, "velocities", _frozen(v))
        object.__setattr__(self, "weights", _frozen(w))

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    @property
    def momentum(self) -> np.ndarray:
        return self.weights @ self.velocities

    def replace(self, positions=None, velocities=None) -> "ParticleEnsemble":
        return ParticleEnsemble(
            self.positions if positions is None else positions,
            self.velocities if velocities is None else velocities,
            self.weights,
        )


@dataclass(frozen=True)
class KineticMoments:
    rho_f: np.ndarray
    j_f: np.ndarray
    u_f: np.ndarray


@dataclass(frozen=True)
class AlignmentKernel:
    """Positive symmetric communication weight on the torus.

    ``constant``: ``psi(x) = c``.
    ``cosine_bump``: ``psi(x) = base + amplitude * prod_i (1 + cos(2 pi x_i)) / 2``.
    """

    kind: str = "constant"
    c: float = 1.0
    amplitude: float = 1.0
    base: float = 0.1

    def __post_init__(self):
        if self.kind == "constant":
            if not self.c > 0:
                raise ValueError("constant kernel needs c > 0")
        elif self.kind == "cosine_bump":
            if not (self.amplitude > 0 and self.base > 0):
                raise ValueError("cosine_bump kernel needs amplitude > 0 and base > 0")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def __call__(self, dx) -> np.ndarray:
        """Evaluate at displacements ``dx`` of shape ``(..., N)``."""
        dx = np.asarray(dx, dtype=float)
        if self.kind == "constant":
            return np.full(dx.shape[:-1], self.c)
        bump = np.prod(0.5 * (1.0 + np.cos(2.0 * np.pi * dx)), axis=-1)
        return self.base + self.amplitude * bump

    def sample(self, grid: GridSpec) -> np.ndarray:
        """Kernel at every node offset, checked and exactly symmetrised."""
        psi = self(np.moveaxis(grid.offsets(), 0, -1))
        mirrored = np.roll(np.flip(psi), 1, axis=tuple(range(grid.dim)))
        scale = np.max(np.abs(psi))
        if not np.all(psi > 0):
            raise ValueError("alignment kernel is not positive on the grid")
        if np.max(np.abs(psi - mirrored)) > 1e-12 * scale:
            raise ValueError("alignment kernel is not symmetric on the grid")
        return 0.5 * (psi + mirrored)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "c": self.c}
        return {"kind": "cosine_bump", "amplitude": self.amplitude, "base": self.base}


@dataclass(frozen=True)
class LocalAlignment:
    name = "local"


@dataclass(frozen=True)
class NonlocalAlignment:
    kernel: AlignmentKernel = field(default_factory=AlignmentKernel)
    name = "nonlocal"


Collision = Optional[Union[LocalAlignment, NonlocalAlignment]]


@dataclass(frozen=True)
class ModelParams:
    gamma: float = 2.0
    mu: float = 0.05
    lam: float = 0.0
    collision: Collision = None
    sigma: float = 0.05
    rho_floor: float = 1e-10
    rho_f_floor: float = 1e-10
    cfl: float = 0.5

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 2 * self.mu + self.lam > 0:
            raise ValueError(
                f"lambda: 2*mu + lambda must be positive, got {2 * self.mu + self.lam:g}"
            )
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if not (self.rho_floor > 0 and self.rho_f_floor > 0):
            raise ValueError("density floors must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.collision is not None and not isinstance(
            self.collision, (LocalAlignment, NonlocalAlignment)
        ):
            raise ValueError(f"unknown collision operator {self.collision!r}")


class CICStencil:
    """Cloud-in-cell weights of a set of points, reusable for both directions.

    ``deposit`` spreads per-particle values to the grid (divided by the cell
    volume); ``gather`` interpolates grid fields back to the particles.
    """

    def __init__(self, positions, grid: GridSpec):
        x = np.atleast_2d(np.asarray(positions, dtype=float))
        if x.shape[1] != grid.dim:
            raise ValueError(f"points have dimension {x.shape[1]}, grid has {grid.dim}")
        self.grid = grid
        n = grid.n
        s = x * n - 0.5
        base = np.floor(s)
        frac = s - base
        lo = base.astype(np.int64) % n
        hi = (lo + 1) % n
        # corners enumerated with axis 0 slowest, C-order flat indices
        flats = [np.zeros(x.shape[0], dtype=np.int64)]
        weights = [np.ones(x.shape[0])]
        for ax in range(grid.dim):
            flats = [f * n + idx[:, ax] for f in flats for idx in (lo, hi)]
            weights = [w * wk for w in weights for wk in (1.0 - frac[:, ax], frac[:, ax])]
        # (2^N, P)
        self.flat = np.array(flats)
        self.weights = np.array(weights)

    def deposit(self, values) -> np.ndarray:
        """Deposit ``(P,)`` or ``(P, C)`` values; returns a density field."""
        values = np.asarray(values, dtype=float)
        grid = self.grid
        flat = self.flat.ravel()

        def one(vals):
            total = np.bincount(
                flat, weights=(self.weights * vals).ravel(), minlength=grid.num_cells
            )
            return total.reshape(grid.shape) / grid.cell_volume

        if values.ndim == 1:
            return one(values)
        return np.stack([one(values[:, c]) for c in range(values.shape[1])])

    def gather(self, field) -> np.ndarray:
        """Interpolate a scalar ``shape`` field to ``(P,)`` or a vector field to ``(P, C)``."""
        field = np.asarray(field, dtype=float)
        grid = self.grid
        if field.shape == grid.shape:
            return np.sum(self.weights * field.ravel()[self.flat], axis=0)
        comps = field.reshape(field.shape[0], -1)
        return np.stack(
            [np.sum(self.weights * comps[c][self.flat], axis=0) for c in range(field.shape[0])],
            axis=1,
        )


def derive_velocity(fluid: FluidState, params: ModelParams) -> np.ndarray:
    """``u = m / max(rho, rho_floor)``."""
    return fluid.momentum / np.maximum(fluid.rho, params.rho_floor)


def deposit_moments(
    particles: ParticleEnsemble,
    grid: GridSpec,
    rho_f_floor: float = 1e-10,
    stencil: Optional[CICStencil] = None,
) -> KineticMoments:
    if len(particles) == 0:
        raise ValueError("cannot deposit an empty ensemble")
    if stencil is None:
        stencil = CICStencil(particles.positions, grid)
    w = particles.weights
    rho_f = stencil.deposit(w)
    j_f = stencil.deposit(w[:, None] * particles.velocities)
    u_f = j_f / np.maximum(rho_f, rho_f_floor)
    return KineticMoments(rho_f=rho_f, j_f=j_f, u_f=u_f)


def interpolate_field(field, x, grid: Optional[GridSpec] = None) -> np.ndarray:
    """Multilinear periodic interpolation of a grid field at point(s) ``x``.

    A single point of shape ``(N,)`` returns a scalar (or ``(C,)`` vector);
    ``(P, N)`` points return ``(P,)`` or ``(P, C)``.
    """
    field = np.asarray(field, dtype=float)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if grid is None:
        grid = GridSpec(pts.shape[1], field.shape[-1])
    out = CICStencil(wrap_positions(pts), grid).gather(field)
    return out[0] if single else out
