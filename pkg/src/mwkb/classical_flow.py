"""Hamiltonian flow on primary phase space with Jacobi field and actions.

The state integrated for each initial point ``x0`` is

``[ g (2n) | grad g (2n x 2n, row-major) | int p.qdot | int H ]``

with ``gdot = J grad H(g)``, ``d/dt grad g = J H''(g) grad g`` and the two
scalar accumulators sharing the adaptive error control.  Batches of points
are integrated as one stacked system; the relative tolerance is divided by
``sqrt(m)`` so that the root-mean-square error norm used by
:func:`scipy.integrate.solve_ivp` still bounds every individual trajectory.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .config import CHUNK, DEFAULT_TOL, Tolerances
from .errors import DimensionError, RunawayTrajectoryError, ScenarioError
from .hamiltonian_model import HamiltonianModel
from .phase_geometry import apply_J, symplectic_matrix

__all__ = [
    "Trajectory",
    "FlowBatch",
    "QuadraticPropagator",
    "flow",
    "flow_batch",
    "flow_points",
    "quadratic_propagate",
    "jacobi_bound_check",
    "JacobiBoundReport",
    "flowed_chord_action",
]

_MIN_RTOL = 1e-13


class _Runaway(Exception):
    pass


def _rhs_factory(H: HamiltonianModel, m: int, jac: bool, runaway: float):
    d = H.dim
    n = H.n
    width = d + (d * d if jac else 0) + 2

    def rhs(t, y):
        Y = y.reshape(m, width)
        x = Y[:, :d]
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > runaway:
            raise _Runaway(t)
        g = H._grad(t, x)
        out = np.empty_like(Y)
        xdot = apply_J(g)
        out[:, :d] = xdot
        if jac:
            hess = H._hess(t, x)
            G = Y[:, d:d + d * d].reshape(m, d, d)
            JH = np.concatenate([hess[:, n:, :], -hess[:, :n, :]], axis=1)
            out[:, d:d + d * d] = np.matmul(JH, G).reshape(m, d * d)
        out[:, -2] = np.sum(x[:, n:] * xdot[:, :n], axis=-1)
        out[:, -1] = H._value(t, x)
        return out.ravel()

    return rhs, width


def _initial_state(X0: np.ndarray, jac: bool) -> np.ndarray:
    m, d = X0.shape
    parts = [X0]
    if jac:
        parts.append(np.broadcast_to(np.eye(d).ravel(), (m, d * d)))
    parts.append(np.zeros((m, 2)))
    return np.concatenate(parts, axis=1).ravel()


def _integrate(H, X0, t0, t1, jac, tol: Tolerances, t_eval=None, dense=False):
    m = X0.shape[0]
    rhs, width = _rhs_factory(H, m, jac, tol.runaway)
    y0 = _initial_state(X0, jac)
    rtol = max(tol.rtol / np.sqrt(m), _MIN_RTOL)
    try:
        sol = solve_ivp(rhs, (t0, t1), y0, method=tol.method, rtol=rtol, atol=tol.atol,
                        t_eval=t_eval, dense_output=dense)
    except _Runaway as exc:
        raise RunawayTrajectoryError(
            f"trajectory left the region |x| < {tol.runaway:g} or became non-finite near "
            f"t = {exc.args[0]:.6g}; the Hamiltonian does not generate a global flow here") from None
    if sol.status != 0:
        raise RunawayTrajectoryError(f"integrator failed: {sol.message}")
    return sol, width


def _check_time(t: float, t0: float, tol: Tolerances):
    if not np.isfinite(t) or abs(t - t0) > tol.t_max:
        raise ScenarioError(f"|t| = {abs(t - t0):g} exceeds the horizon t_max = {tol.t_max:g}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One integrated trajectory ``g(tau | x0)`` for ``tau`` between ``t0`` and ``t``.

    Attributes
    ----------
    x0 : ndarray
    t0, t : float
    times : ndarray
        Integrator step times (the stored samples).
    states, jacobians : ndarray
        ``g`` and ``grad g`` at ``times``.
    actions, ham_integrals : ndarray
        ``int_{t0}^{tau} p . qdot`` and ``int_{t0}^{tau} H(g)`` at ``times``.
    """

    x0: np.ndarray
    t0: float
    t: float
    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    jacobians: np.ndarray = field(repr=False)
    actions: np.ndarray = field(repr=False)
    ham_integrals: np.ndarray = field(repr=False)
    _dense: object = field(default=None, repr=False)

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    @property
    def jacobi(self) -> np.ndarray:
        """``grad g`` at the final time."""
        return self.jacobians[-1]

    @property
    def action(self) -> float:
        return float(self.actions[-1])

    @property
    def ham_integral(self) -> float:
        return float(self.ham_integrals[-1])

    def at(self, tau):
        """Dense-output query: ``(g, grad g, action, ham_integral)`` at ``tau``."""
        lo, hi = sorted((self.t0, self.t))
        if np.any(np.asarray(tau) < lo - 1e-12) or np.any(np.asarray(tau) > hi + 1e-12):
            raise ScenarioError(f"tau outside the trajectory span [{lo}, {hi}]")
        if self._dense is None:
            raise ScenarioError("trajectory was built without dense output")
        y = self._dense(tau)
        d = self.x0.shape[0]
        y = np.moveaxis(np.asarray(y), 0, -1)
        return (y[..., :d], y[..., d:d + d * d].reshape(y.shape[:-1] + (d, d)),
                y[..., -2], y[..., -1])

    def energy_drift(self, H: HamiltonianModel) -> float:
        """Largest ``|H(g(tau)) - H(x0)|`` over the samples (static ``H`` only)."""
        e = H.value(0.0, self.states)
        return float(np.max(np.abs(e - e[0])))

    def symplecticity_defect(self) -> float:
        """Largest ``|grad g^T J grad g - J|`` over the samples."""
        Jm = symplectic_matrix(self.x0.shape[0] // 2)
        G = self.jacobians
        return float(np.max(np.abs(np.transpose(G, (0, 2, 1)) @ Jm @ G - Jm)))


def flow(H: HamiltonianModel, x0, t: float, t0: float = 0.0, tol: Tolerances = DEFAULT_TOL,
         dense: bool = True) -> Trajectory:
    """Integrate ``g(tau | x0)`` from ``t0`` to ``t`` (``t < t0`` flows backward).

    Raises
    ------
    RunawayTrajectoryError
        On non-finite states, escape beyond ``tol.runaway`` or integrator failure.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (H.dim,):
        raise DimensionError(f"x0 must have shape ({H.dim},), got {x0.shape}")
    _check_time(t, t0, tol)
    d = H.dim
    if t == t0:
        z = np.zeros(1)
        return Trajectory(x0, t0, t, np.array([t0]), x0[None].copy(), np.eye(d)[None], z, z.copy(),
                          lambda tau: np.multiply.outer(_initial_state(x0[None], True), np.ones(np.shape(tau))))
    sol, width = _integrate(H, x0[None], t0, t, True, tol, dense=dense)
    Y = sol.y.T
    return Trajectory(x0, t0, t, sol.t, Y[:, :d], Y[:, d:d + d * d].reshape(-1, d, d),
                      Y[:, -2], Y[:, -1], sol.sol)


@dataclass(frozen=True, eq=False)
class FlowBatch:
    """Endpoints of a batch of flows.

    ``end`` has shape ``(m, 2n)``, ``jacobi`` ``(m, 2n, 2n)`` (or ``None``),
    ``action`` and ``ham_integral`` ``(m,)``.  When ``t_eval`` was requested,
    ``path`` holds the states at those times with shape ``(k, m, 2n)`` and
    ``path_jacobi`` the matching Jacobians.
    """

    end: np.ndarray
    jacobi: np.ndarray | None
    action: np.ndarray
    ham_integral: np.ndarray
    path: np.ndarray | None = None
    path_jacobi: np.ndarray | None = None
    path_action: np.ndarray | None = None
    path_ham: np.ndarray | None = None


def _batch_chunk(H, X0, t, t0, jac, tol, t_eval):
    d = H.dim
    m = X0.shape[0]
    if t == t0:
        k = 0 if t_eval is None else len(t_eval)
        J0 = np.broadcast_to(np.eye(d), (m, d, d)).copy() if jac else None
        z = np.zeros(m)
        path = None if t_eval is None else np.broadcast_to(X0, (k, m, d)).copy()
        pj = None if (t_eval is None or not jac) else np.broadcast_to(np.eye(d), (k, m, d, d)).copy()
        zz = None if t_eval is None else np.zeros((k, m))
        return FlowBatch(X0.copy(), J0, z, z.copy(), path, pj, zz, None if zz is None else zz.copy())
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        grid = np.unique(np.concatenate([t_eval, [t]]))
        if t < t0:
            grid = grid[::-1]
    else:
        grid = None
    sol, width = _integrate(H, X0, t0, t, jac, tol, t_eval=grid)
    Y = sol.y.T.reshape(-1, m, width)
    last = Y[-1]
    jac_end = last[:, d:d + d * d].reshape(m, d, d) if jac else None
    out = dict(end=last[:, :d].copy(), jacobi=jac_end, action=last[:, -2].copy(),
               ham_integral=last[:, -1].copy())
    if t_eval is not None:
        idx = [int(np.argmin(np.abs(sol.t - te))) for te in t_eval]
        P = Y[idx]
        out.update(path=P[..., :d].copy(),
                   path_jacobi=P[..., d:d + d * d].reshape(len(idx), m, d, d).copy() if jac else None,
                   path_action=P[..., -2].copy(), path_ham=P[..., -1].copy())
    return FlowBatch(**out)


def _quadratic_batch(H, X0, t, t0, jac, tol):
    """Exact affine endpoints with action integrals by Gauss-Legendre panels on the closed-form path."""
    d = H.dim
    n = H.n
    m = X0.shape[0]
    P = quadratic_propagate(H, t0, t, tol)
    panels = max(1, math.ceil(2 * abs(t - t0)))
    u, w = _gauss_legendre(24)
    edges = np.linspace(t0, t, panels + 1)
    action = np.zeros(m)
    ham = np.zeros(m)
    for a, b in zip(edges[:-1], edges[1:]):
        for uk, wk in zip(u, w):
            tau = a + uk * (b - a)
            K, c = P.at(tau)
            z = X0 @ K.T + c
            grad = H.grad(tau, z)
            action += wk * (b - a) * np.sum(z[:, n:] * grad[:, n:], axis=1)
            ham += wk * (b - a) * H.value(tau, z)
    jacobi = np.broadcast_to(P.K, (m, d, d)).copy() if jac else None
    return FlowBatch(P.apply(X0), jacobi, action, ham)


def flow_batch(H: HamiltonianModel, X0, t: float, t0: float = 0.0, jacobian: bool = True,
               tol: Tolerances = DEFAULT_TOL, t_eval=None, threads: int = 1) -> FlowBatch:
    """Integrate many initial points at once.

    Points are processed in fixed chunks of :data:`mwkb.config.CHUNK` so the
    result does not depend on ``threads``.  Quadratic Hamiltonians without
    ``t_eval`` use the exact affine flow, with the action integrals taken by
    Gauss-Legendre quadrature along the closed-form path.
    """
    X0 = np.asarray(X0, dtype=float)
    if X0.ndim != 2 or X0.shape[1] != H.dim:
        raise DimensionError(f"X0 must have shape (m, {H.dim}), got {X0.shape}")
    _check_time(t, t0, tol)
    m = X0.shape[0]
    if m == 0:
        d = H.dim
        return FlowBatch(np.zeros((0, d)), np.zeros((0, d, d)) if jacobian else None,
                         np.zeros(0), np.zeros(0))
    if H.is_quadratic and t_eval is None and t != t0:
        return _quadratic_batch(H, X0, t, t0, jacobian, tol)
    chunks = [X0[i:i + CHUNK] for i in range(0, m, CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _batch_chunk(H, c, t, t0, jacobian, tol, t_eval), chunks))
    else:
        parts = [_batch_chunk(H, c, t, t0, jacobian, tol, t_eval) for c in chunks]
    if len(parts) == 1:
        return parts[0]

    def cat(name, axis=0):
        vals = [getattr(p, name) for p in parts]
        return None if vals[0] is None else np.concatenate(vals, axis=axis)

    return FlowBatch(cat("end"), cat("jacobi"), cat("action"), cat("ham_integral"),
                     cat("path", 1), cat("path_jacobi", 1), cat("path_action", 1), cat("path_ham", 1))


def flow_points(H: HamiltonianModel, X0, t: float, t0: float = 0.0, tol: Tolerances = DEFAULT_TOL,
                threads: int = 1) -> np.ndarray:
    """Endpoints only, for arrays of shape ``(..., 2n)``."""
    X0 = np.asarray(X0, dtype=float)
    if H.is_quadratic:
        P = quadratic_propagate(H, t0, t, tol)
        return P.apply(X0)
    flat = X0.reshape(-1, H.dim)
    return flow_batch(H, flat, t, t0, jacobian=False, tol=tol, threads=threads).end.reshape(X0.shape)


# ---------------------------------------------------------------------------
# quadratic closed form
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadraticPropagator:
    """Affine flow ``g(t, s | x) = K (x + F) = K x + b`` of a quadratic Hamiltonian."""

    K: np.ndarray
    F: np.ndarray
    s: float
    t: float
    _path: object = field(default=None, repr=False)

    @property
    def b(self) -> np.ndarray:
        return self.K @ self.F

    def apply(self, x) -> np.ndarray:
        """Forward image ``g(t, s | x)``."""
        return np.asarray(x, dtype=float) @ self.K.T + self.b

    def inverse(self, x) -> np.ndarray:
        """Backward image ``g(s, t | x) = K^{-1} x - F``."""
        Kinv = np.linalg.inv(self.K)
        return np.asarray(x, dtype=float) @ Kinv.T - self.F

    def at(self, tau: float):
        """``(K(tau, s), b(tau, s))`` for intermediate times."""
        return self._path(tau)


def quadratic_propagate(H: HamiltonianModel, s: float, t: float,
                        tol: Tolerances = DEFAULT_TOL) -> QuadraticPropagator:
    """Closed-form (or matrix-ODE) propagator of a quadratic Hamiltonian.

    ``K(t, s)`` solves ``dK/dt = J H''(t) K`` with ``K(s, s) = I`` and
    ``F(t, s) = int_s^t K(tau, s)^{-1} J H'(tau) dtau``.  Constant
    coefficients use one exponential of the augmented generator.
    """
    if not H.is_quadratic:
        raise ScenarioError("quadratic_propagate needs a quadratic Hamiltonian")
    d = H.dim
    Jm = symplectic_matrix(H.n)

    if not H.time_dependent:
        A = Jm @ H.hess_fn(0.0)
        c = Jm @ H.lin_fn(0.0)
        aug = np.zeros((d + 1, d + 1))
        aug[:d, :d] = A
        aug[:d, d] = c

        def path(tau):
            E = expm(aug * (tau - s))
            return E[:d, :d], E[:d, d]
    else:
        def rhs(tau, y):
            K = y[:d * d].reshape(d, d)
            bb = y[d * d:]
            A = Jm @ H.hess_fn(tau)
            return np.concatenate([(A @ K).ravel(), A @ bb + Jm @ H.lin_fn(tau)])

        y0 = np.concatenate([np.eye(d).ravel(), np.zeros(d)])
        if t == s:
            sol = None
        else:
            sol = solve_ivp(rhs, (s, t), y0, method="DOP853", rtol=1e-12, atol=1e-13, dense_output=True)
            if sol.status != 0:
                raise RunawayTrajectoryError(f"matrix propagator failed: {sol.message}")

        def path(tau):
            y = y0 if sol is None else sol.sol(tau)
            return y[:d * d].reshape(d, d).copy(), y[d * d:].copy()

    K, b = path(t)
    F = np.linalg.solve(K, b)
    return QuadraticPropagator(K, F, float(s), float(t), path)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JacobiBoundReport:
    """Worst margins of the Jacobi growth bounds (negative means violated)."""

    norm_margin: float
    deviation_margin: float
    ok: bool
    worst_time: float


def jacobi_bound_check(traj: Trajectory, c1: float) -> JacobiBoundReport:
    """Check ``||grad g|| <= e^{c1 |tau|}`` and ``||grad g - I|| <= e^{c1 |tau|} - 1``.

    A violation means either the declared ``c1`` is too small for the region
    the trajectory visits or the integrator drifted.
    """
    if not np.isfinite(c1):
        raise ScenarioError("c1 must be finite for the bound check")
    d = traj.x0.shape[0]
    tau = np.abs(traj.times - traj.t0)
    growth = np.exp(c1 * tau)
    norms = np.linalg.norm(traj.jacobians, ord=2, axis=(1, 2))
    devs = np.linalg.norm(traj.jacobians - np.eye(d), ord=2, axis=(1, 2))
    m1 = growth - norms
    m2 = (growth - 1.0) - devs
    worst = np.minimum(m1, m2)
    k = int(np.argmin(worst))
    slack = 1e-12 * np.maximum(1.0, growth)
    ok = bool(np.all(m1 >= -slack) and np.all(m2 >= -slack))
    return JacobiBoundReport(float(np.min(m1)), float(np.min(m2)), ok, float(traj.times[k]))


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(order: int):
    if order not in _GL_CACHE:
        u, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = (0.5 * (u + 1.0), 0.5 * w)
    return _GL_CACHE[order]


def flowed_chord_action(H: HamiltonianModel, x1, x2, t: float, t0: float = 0.0,
                        tol: Tolerances = DEFAULT_TOL, order: int = 32):
    """``int p . dq`` along the image under ``g(t | .)`` of the chord from ``x1`` to ``x2``.

    The image curve is ``c(u) = g(t | x1 + u (x2 - x1))``; its tangent comes
    from the Jacobi field, and the ``u``-integral uses Gauss-Legendre nodes.
    ``x1`` and ``x2`` may be stacked as ``(m, 2n)``.

    Returns
    -------
    action : ndarray or float
    start, end : ndarray
        The images of ``x1`` and ``x2``.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    single = x1.ndim == 1
    X1, X2 = np.atleast_2d(x1), np.atleast_2d(x2)
    m, d = X1.shape
    n = d // 2
    u, w = _gauss_legendre(order)
    dx = X2 - X1
    nodes = X1[:, None, :] + u[None, :, None] * dx[:, None, :]
    ends = np.stack([X1, X2], axis=1)
    if H.is_quadratic:
        P = quadratic_propagate(H, t0, t, tol)
        img = P.apply(nodes)
        tang = dx @ P.K.T
        tang = np.broadcast_to(tang[:, None, :], img.shape)
        end_img = P.apply(ends)
    else:
        fb = flow_batch(H, np.concatenate([nodes.reshape(-1, d), ends.reshape(-1, d)]), t, t0, True, tol)
        k = m * order
        img = fb.end[:k].reshape(m, order, d)
        G = fb.jacobi[:k].reshape(m, order, d, d)
        tang = np.einsum("muij,mj->mui", G, dx)
        end_img = fb.end[k:].reshape(m, 2, d)
    integrand = np.sum(img[..., n:] * tang[..., :n], axis=-1)
    action = integrand @ w
    if single:
        return float(action[0]), end_img[0, 0], end_img[0, 1]
    return action, end_img[:, 0], end_img[:, 1]
