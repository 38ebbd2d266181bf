"""Numerical tolerances and integrator settings.

A single frozen :class:`Tolerances` instance is threaded through the solvers.
The defaults are the values the acceptance suite is calibrated against.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    """Tolerance bundle.

    Attributes
    ----------
    geom : float
        Loop closure and endpoint agreement.
    mat : float
        Symplecticity check for user supplied matrices.
    symp : float
        Symplecticity of integrated Jacobi fields.
    bc : float
        Forward residual of boundary-problem roots.
    caustic : float
        Threshold on ``|det grad M|`` relative to the median over the initial
        manifold; below it a root is treated as focal.
    fd : float
        Relative agreement of analytic and finite-difference derivatives.
    energy : float
        Energy drift allowed along a static-Hamiltonian trajectory.
    rtol, atol : float
        Integrator tolerances.
    method : str
        :func:`scipy.integrate.solve_ivp` method; the default is the
        Dormand-Prince 5(4) pair.
    t_max : float
        Largest admissible ``|t|``.
    runaway : float
        Phase-space radius beyond which a trajectory counts as runaway.
    max_iter : int
        Iteration cap for fixed-point and Newton solves.
    """

    geom: float = 1e-9
    mat: float = 1e-10
    symp: float = 1e-8
    bc: float = 1e-9
    caustic: float = 1e-6
    fd: float = 1e-5
    energy: float = 1e-7
    rtol: float = 1e-10
    atol: float = 1e-12
    method: str = "RK45"
    t_max: float = 50.0
    runaway: float = 1e8
    max_iter: int = 200

    @property
    def dedup(self) -> float:
        """Root deduplication radius, ten times the forward tolerance."""
        return 10.0 * self.bc

    def with_(self, **kw) -> "Tolerances":
        return replace(self, **kw)


DEFAULT_TOL = Tolerances()

#: Batched solves are split into chunks of this many points.  The chunk size
#: is fixed (never derived from the thread count) so that adaptive step
#: selection, and therefore every output bit, is independent of threading.
CHUNK = 1024


def thread_count(requested: int | None = None) -> int:
    """Resolve the worker count from an explicit value or ``MWKB_THREADS``."""
    if requested is not None and requested > 0:
        return int(requested)
    env = os.environ.get("MWKB_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            value = 1
        return max(1, value)
    return 1
