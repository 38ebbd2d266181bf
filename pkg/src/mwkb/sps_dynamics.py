"""Secondary phase space: left/right variables, extended flows, manifolds.

A point ``z = (x, y)`` of the doubled space is mapped to the pair

``l = x - 1/2 J y``  and  ``r = x + 1/2 J y``.

In these variables the extended Schrodinger flow moves ``l`` along the
ordinary flow and keeps ``r`` fixed, while the extended Heisenberg flow moves
both along the ordinary flow.  Every extended trajectory is therefore built
from one or two primary-space flows; no ``4n``-dimensional system is
integrated here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .classical_flow import flow_batch, quadratic_propagate
from .config import DEFAULT_TOL, Tolerances
from .errors import DimensionError, ScenarioError
from .hamiltonian_model import HamiltonianModel, InitialPhaseData
from .phase_geometry import apply_J

__all__ = [
    "ProblemKind",
    "SpsState",
    "to_left_right",
    "from_left_right",
    "extended_hamiltonian",
    "sps_flow",
    "LagrangianManifold",
    "advance_manifold",
    "midpoint_jacobian_from_flows",
    "flow_with_jacobian",
]


class ProblemKind(str, enum.Enum):
    SCHRODINGER = "schrodinger"
    HEISENBERG = "heisenberg"

    @classmethod
    def parse(cls, value) -> "ProblemKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ScenarioError(f"kind must be 'schrodinger' or 'heisenberg', got {value!r}") from None


def to_left_right(x, y):
    """``(l, r) = (x - 1/2 J y, x + 1/2 J y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionError(f"x and y shapes differ: {x.shape} vs {y.shape}")
    half = 0.5 * apply_J(y)
    return x - half, x + half


def from_left_right(l, r):
    """Inverse of :func:`to_left_right`: ``x = (l + r)/2``, ``y = J (l - r)``."""
    l = np.asarray(l, dtype=float)
    r = np.asarray(r, dtype=float)
    return 0.5 * (l + r), apply_J(l - r)


def extended_hamiltonian(H: HamiltonianModel, kind, x, y, t: float = 0.0):
    """``H(l)`` for the Schrodinger problem, ``H(l) - H(r)`` for the Heisenberg problem."""
    kind = ProblemKind.parse(kind)
    l, r = to_left_right(x, y)
    if kind is ProblemKind.SCHRODINGER:
        return H.value(t, l)
    return H.value(t, l) - H.value(t, r)


def flow_with_jacobian(H: HamiltonianModel, X, t: float, tol: Tolerances = DEFAULT_TOL,
                       threads: int = 1):
    """Endpoints and Jacobians of ``g(t | X)`` for ``X`` of shape ``(m, 2n)``.

    Quadratic Hamiltonians use the exact affine propagator.
    """
    X = np.asarray(X, dtype=float)
    if H.is_quadratic:
        P = quadratic_propagate(H, 0.0, t, tol)
        return P.apply(X), np.broadcast_to(P.K, X.shape[:-1] + P.K.shape).copy()
    fb = flow_batch(H, X, t, jacobian=True, tol=tol, threads=threads)
    return fb.end, fb.jacobi


@dataclass(frozen=True, eq=False)
class SpsState:
    """Result of an extended flow: the new ``(x, y)`` and the left/right images."""

    x: np.ndarray
    y: np.ndarray
    l0: np.ndarray
    r0: np.ndarray
    lt: np.ndarray
    rt: np.ndarray
    t: float


def sps_flow(H: HamiltonianModel, kind, x0, y0, t: float, tol: Tolerances = DEFAULT_TOL) -> SpsState:
    """Extended flow composed from primary flows.

    Schrodinger: ``l_t = g(t | l0)``, ``r_t = r0``.
    Heisenberg: ``l_t = g(t | l0)``, ``r_t = g(t | r0)``.
    Inputs may be stacked as ``(m, 2n)``.
    """
    kind = ProblemKind.parse(kind)
    l0, r0 = to_left_right(x0, y0)
    shape = l0.shape
    L0 = l0.reshape(-1, H.dim)
    R0 = r0.reshape(-1, H.dim)
    if kind is ProblemKind.SCHRODINGER:
        lt, _ = flow_with_jacobian(H, L0, t, tol)
        rt = R0.copy()
    else:
        ends, _ = flow_with_jacobian(H, np.concatenate([L0, R0]), t, tol)
        lt, rt = ends[:len(L0)], ends[len(L0):]
    lt = lt.reshape(shape)
    rt = rt.reshape(shape)
    x, y = from_left_right(lt, rt)
    return SpsState(x, y, l0, r0, lt, rt, float(t))


def midpoint_jacobian_from_flows(kind, Gl, Gr, B):
    """``grad M`` from the flow Jacobians at ``l'`` and ``r'`` and ``B = beta0''``.

    Heisenberg: ``1/2 [Gl (I - 1/2 J B) + Gr (I + 1/2 J B)]``; Schrodinger
    replaces ``Gr`` by the identity.  All arguments stack over leading axes.
    """
    kind = ProblemKind.parse(kind)
    B = np.asarray(B, dtype=float)
    d = B.shape[-1]
    n = d // 2
    JB = np.concatenate([B[..., n:, :], -B[..., :n, :]], axis=-2)
    eye = np.eye(d)
    left = np.matmul(Gl, eye - 0.5 * JB)
    if kind is ProblemKind.SCHRODINGER:
        right = eye + 0.5 * JB
    else:
        right = np.matmul(Gr, eye + 0.5 * JB)
    return 0.5 * (left + right)


@dataclass(frozen=True, eq=False)
class LagrangianManifold:
    """Sampled initial manifold ``y = grad beta0(x)`` and its image at time ``t``.

    Attributes
    ----------
    phase0 : InitialPhaseData
    kind : ProblemKind
    lo, hi : ndarray
        Box ``D0`` that is sampled.
    shape : tuple of int
        Samples per axis; ``base`` is the flattened ``np.meshgrid(..., indexing="ij")``.
    base, y0, l0, r0 : ndarray
        Shape ``(N, 2n)``.
    t : float
        Time of the stored image.
    lt, rt, xt : ndarray
        Images of ``l0`` and ``r0`` and their midpoint.
    gradM, detM : ndarray
        Midpoint Jacobian ``(N, 2n, 2n)`` and its determinant.
    """

    phase0: InitialPhaseData
    kind: ProblemKind
    lo: np.ndarray
    hi: np.ndarray
    shape: tuple
    base: np.ndarray = field(repr=False)
    y0: np.ndarray = field(repr=False)
    l0: np.ndarray = field(repr=False)
    r0: np.ndarray = field(repr=False)
    t: float = 0.0
    lt: np.ndarray = field(default=None, repr=False)
    rt: np.ndarray = field(default=None, repr=False)
    xt: np.ndarray = field(default=None, repr=False)
    gradM: np.ndarray = field(default=None, repr=False)
    detM: np.ndarray = field(default=None, repr=False)

    @classmethod
    def sample(cls, phase0: InitialPhaseData, kind, lo, hi, resolution=64) -> "LagrangianManifold":
        """Uniform grid over the box ``[lo, hi]`` with ``resolution`` points per axis."""
        kind = ProblemKind.parse(kind)
        d = 2 * phase0.n
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,)).copy()
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,)).copy()
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)) or np.any(hi <= lo):
            raise ScenarioError("manifold box must be finite with hi > lo")
        res = np.broadcast_to(np.asarray(resolution, dtype=int), (d,))
        if np.any(res < 2):
            raise ScenarioError("need at least two samples per axis")
        axes = [np.linspace(lo[k], hi[k], res[k]) for k in range(d)]
        base = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        y0 = phase0.phase_grad(base)
        l0, r0 = to_left_right(base, y0)
        eye = np.broadcast_to(np.eye(d), (base.shape[0], d, d))
        gm = midpoint_jacobian_from_flows(kind, eye, eye, phase0.phase_hess(base))
        return cls(phase0, kind, lo, hi, tuple(int(r) for r in res), base, y0, l0, r0, 0.0,
                   l0.copy(), r0.copy(), base.copy(), gm, np.linalg.det(gm))

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(self.lo[k], self.hi[k], self.shape[k]) for k in range(len(self.shape))]

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.asarray(self.shape) - 1)

    def graph_defect(self) -> float:
        """Largest ``|r0 - l0 - J grad beta0((l0 + r0)/2)|`` over the samples."""
        mid = 0.5 * (self.l0 + self.r0)
        return float(np.max(np.abs(self.r0 - self.l0 - apply_J(self.phase0.phase_grad(mid)))))

    def grid_index(self, x) -> np.ndarray:
        """Nearest base-grid multi-index for each point; ``-1`` rows for points off the box."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = np.rint((x - self.lo) / self.spacing).astype(int)
        inside = np.all((idx >= 0) & (idx < np.asarray(self.shape)), axis=-1)
        idx[~inside] = -1
        return idx


def advance_manifold(M: LagrangianManifold, H: HamiltonianModel, t: float,
                     tol: Tolerances = DEFAULT_TOL, threads: int = 1) -> LagrangianManifold:
    """Image of the initial manifold at time ``t`` with per-sample ``grad M``."""
    N = M.base.shape[0]
    if t == 0.0:
        return replace(M, t=0.0, lt=M.l0.copy(), rt=M.r0.copy(), xt=M.base.copy())
    if M.kind is ProblemKind.SCHRODINGER:
        lt, Gl = flow_with_jacobian(H, M.l0, t, tol, threads)
        rt, Gr = M.r0.copy(), None
    else:
        ends, G = flow_with_jacobian(H, np.concatenate([M.l0, M.r0]), t, tol, threads)
        lt, rt, Gl, Gr = ends[:N], ends[N:], G[:N], G[N:]
    gm = midpoint_jacobian_from_flows(M.kind, Gl, Gr, M.phase0.phase_hess(M.base))
    return replace(M, t=float(t), lt=lt, rt=rt, xt=0.5 * (lt + rt), gradM=gm, detM=np.linalg.det(gm))
