"""Numerical laboratory for the generalized Jang equation on
asymptotically anti-de Sitter initial data."""
from . import barriers, geometry, jang, mass, radial_solver, warped_graph
from .barriers import BarrierSpec, make_spec
from .geometry import (InitialData, conformal_perturbation, pure_ads,
                       radial_table, tensor_perturbation)
from .mass import mass_limit, mass_report
from .radial_solver import (RadialGrid, epsilon_sweep, solve_coupled,
                            solve_regularized)

__all__ = [
    "barriers", "geometry", "jang", "mass", "radial_solver", "warped_graph",
    "BarrierSpec", "make_spec", "InitialData", "conformal_perturbation",
    "pure_ads", "radial_table", "tensor_perturbation", "mass_limit",
    "mass_report", "RadialGrid", "epsilon_sweep", "solve_coupled",
    "solve_regularized",
]
__version__ = "0.1.0"
