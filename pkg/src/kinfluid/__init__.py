"""Drag-coupled Vlasov / compressible Navier-Stokes simulation on the unit torus."""

from .config import ConfigError, RunConfig, load_config
from .coupling import InstabilityError, SystemState, coupled_step, drag_exchange_field
from .state import (
    AlignmentKernel,
    FluidState,
    GridSpec,
    LocalAlignment,
    ModelParams,
    NonlocalAlignment,
    ParticleEnsemble,
)

__all__ = [
    "AlignmentKernel",
    "ConfigError",
    "FluidState",
    "GridSpec",
    "InstabilityError",
    "LocalAlignment",
    "ModelParams",
    "NonlocalAlignment",
    "ParticleEnsemble",
    "RunConfig",
    "SystemState",
    "coupled_step",
    "drag_exchange_field",
    "load_config",
]
