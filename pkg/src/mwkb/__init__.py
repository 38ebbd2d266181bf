"""Semiclassical phase-space propagation of Weyl symbols.

The package computes symplectic-area WKB approximations of the Weyl symbols
of the Schrodinger propagator ``U(t, x)`` and of a Heisenberg-evolved density
matrix ``rho(t, x)``.  Exact references are provided by closed forms for
quadratic Hamiltonians and by a split-step grid solver followed by a Wigner
transform.
"""

from .config import DEFAULT_TOL, Tolerances
from .errors import MwkbError, NumericalError, ScenarioError

__version__ = "0.1.0"

__all__ = ["DEFAULT_TOL", "Tolerances", "MwkbError", "NumericalError", "ScenarioError", "__version__"]
