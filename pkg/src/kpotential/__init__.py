"""Screened (k-) potentials, equilibrium charge distributions and related checks."""

from .domain import (
    Ball,
    ChargeDistribution,
    ModelParams,
    NestedShells,
    RadialGrid,
    Scenario,
    SurfaceSphere,
    VolumeShell,
    VoxelSet,
    load_scenario,
    validate,
)
from .equilibrium import ball_closed_form, solve_equilibrium
from .errors import KPotentialError
from .functional import capacity, poincare_constant
from .radial import eval_potential, solve_radial_potential

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "ChargeDistribution",
    "KPotentialError",
    "ModelParams",
    "NestedShells",
    "RadialGrid",
    "Scenario",
    "SurfaceSphere",
    "VolumeShell",
    "VoxelSet",
    "ball_closed_form",
    "capacity",
    "eval_potential",
    "load_scenario",
    "poincare_constant",
    "solve_equilibrium",
    "solve_radial_potential",
    "validate",
]
