"""Exception hierarchy shared by all modules.

Errors fall into two families that the command-line front end maps to exit
codes: :class:`ScenarioError` (bad input, exit code 2) and
:class:`NumericalError` (a computation that could not be completed, exit
code 3).
"""

from __future__ import annotations


class MwkbError(Exception):
    """Base class for every error raised by the package."""


class ScenarioError(MwkbError, ValueError):
    """Invalid configuration, expression or argument.

    Parameters
    ----------
    message : str
        Human readable description.
    path : str, optional
        Dotted path of the offending field in a scenario document.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DimensionError(ScenarioError):
    """Phase-space points or matrices of incompatible dimension."""


class ExpressionError(ScenarioError):
    """An expression string could not be parsed or uses forbidden syntax."""


class NumericalError(MwkbError, RuntimeError):
    """A numerical procedure failed (exit code 3 at the CLI)."""


class EvaluationError(NumericalError):
    """A Hamiltonian or phase evaluator returned non-finite output."""

    def __init__(self, message: str, x=None):
        self.x = x
        super().__init__(message if x is None else f"{message} at x={x!r}")


class RunawayTrajectoryError(NumericalError):
    """The flow left every bounded region or the integrator underflowed.

    Raised when a trajectory is not defined on the requested time interval,
    i.e. the Hamiltonian does not generate a global flow near this point.
    """


class ClosureError(NumericalError):
    """A loop whose last endpoint does not return to its first."""

    def __init__(self, gap: float):
        self.gap = gap
        super().__init__(f"loop is not closed: endpoint gap {gap:.3e}")


class ContractionError(NumericalError):
    """Fixed-point iteration for the boundary problem did not converge.

    The multi-sheet solver (:func:`mwkb.bc_solver.solve_sheets`) does not
    rely on contraction and should be used instead.
    """


class CausticError(NumericalError):
    """A quantity that is undefined on the caustic set was requested there."""


class AliasingError(NumericalError):
    """A grid is too coarse to resolve the requested symbol or state."""


class InstabilityError(NumericalError):
    """The quantum oracle lost norm beyond its tolerance."""


class PoincareCartanError(NumericalError):
    """Two loop-phase routes that must agree differ beyond tolerance."""
