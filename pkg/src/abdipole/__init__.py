"""Aharonov-Bohm phases from a chain of quantum magnetic dipoles.

Modules
-------
geometry          filament curves, dipole chains, charge trajectories
electromagnetics  fields, vector potentials, line and loop phases
spin              two-level dipole dynamics and adiabatic phases
overlap           solenoid state overlaps after two flybys
interference      two-path cross-sections and visibility
shield            superconducting shield cancellation and feasibility
scenario, runner  scenario files, sweeps and reports
"""

from ._version import __version__
from .errors import (
    ABError,
    AdmissibilityError,
    ConvergenceError,
    SingularFieldError,
    ValidationError,
)

__all__ = [
    "__version__",
    "ABError",
    "AdmissibilityError",
    "ConvergenceError",
    "SingularFieldError",
    "ValidationError",
]
