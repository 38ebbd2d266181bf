"""Symplectic linear algebra on primary phase space.

Points are real arrays whose last axis has length ``2n`` and is ordered
``(q_1..q_n, p_1..p_n)``.  The symplectic matrix ``J = [[0, I], [-I, 0]]`` is
never formed in the hot paths; :func:`apply_J` permutes and negates blocks
instead.  All functions broadcast over leading axes.

Loops are bookkeeping objects: a :class:`Loop` is an ordered list of
:class:`Segment` records, each carrying its endpoints and the value of
``integral p . dq`` along it.  Chords get their action in closed form, while
trajectory arcs and flowed chords receive it from the integrator.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_TOL
from .errors import ClosureError, DimensionError, ScenarioError

__all__ = [
    "symplectic_matrix",
    "apply_J",
    "wedge",
    "polygon_phase",
    "alternating_sum",
    "polygon_vertices",
    "chord_action",
    "SegmentKind",
    "Segment",
    "LoopLabel",
    "Loop",
    "polygon_loop",
    "loop_area",
    "AffineMap",
    "affine_apply",
    "is_symplectic",
]


def _as_points(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] % 2:
        raise DimensionError(f"{name} must have an even-length last axis, got shape {arr.shape}")
    return arr


def symplectic_matrix(n: int) -> np.ndarray:
    """Dense ``2n x 2n`` matrix ``J`` (for tests and small linear algebra)."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def apply_J(v: np.ndarray) -> np.ndarray:
    """Return ``J v`` for vectors stacked along the last axis.

    ``J (a, b) = (b, -a)`` with ``a`` the q-block and ``b`` the p-block.
    """
    v = np.asarray(v)
    n = v.shape[-1] // 2
    return np.concatenate([v[..., n:], -v[..., :n]], axis=-1)


def wedge(x1, x2) -> np.ndarray | float:
    """Symplectic product ``x1 . J x2 = q1.p2 - p1.q2``.

    Examples
    --------
    >>> float(wedge([2.0, 3.0], [5.0, 7.0]))
    -1.0
    """
    a = _as_points(x1, "x1")
    b = _as_points(x2, "x2")
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    n = a.shape[-1] // 2
    out = np.sum(a[..., :n] * b[..., n:], axis=-1) - np.sum(a[..., n:] * b[..., :n], axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _stack(points, minimum: int, what: str) -> np.ndarray:
    pts = _as_points(points, what)
    if pts.ndim < 2:
        raise DimensionError(f"{what} must be a sequence of phase-space points")
    if pts.shape[0] < minimum:
        raise ScenarioError(f"{what} needs at least {minimum} points, got {pts.shape[0]}")
    return pts


def polygon_phase(points) -> np.ndarray | float:
    """Polygon phase ``P_N = 2 sum_{i<j} (-1)^(i+j+1) x_i ^ x_j``.

    ``points`` has shape ``(N, ..., 2n)`` with ``N >= 3``; extra middle axes
    are treated as a batch.  With 1-based indices the sign of the pair
    ``(i, j)`` is ``(-1)^(i+j+1)``, i.e. positive for adjacent entries.

    For odd ``N`` the value is ``integral p . dq`` around the polygon whose
    successive sides have the given midpoints, traversed as
    ``x_N -> ... -> x_1 -> x_N`` (see :func:`polygon_loop`).
    """
    pts = _stack(points, 3, "points")
    N = pts.shape[0]
    total = np.zeros(pts.shape[1:-1])
    # Group by i: sum_j>i s_ij x_j is an alternating partial sum.
    for i in range(N - 1):
        signs = np.array([(-1.0) ** (i + j + 1) for j in range(i + 1, N)])  # 0-based
        partner = np.tensordot(signs, pts[i + 1:], axes=(0, 0))
        total = total + wedge(pts[i], partner)
    out = 2.0 * total
    return float(out) if np.ndim(out) == 0 else out


def alternating_sum(points) -> np.ndarray:
    """``S_N = x_1 - x_2 + x_3 - ...`` along the first axis."""
    pts = _stack(points, 1, "points")
    signs = (-1.0) ** np.arange(pts.shape[0])
    return np.tensordot(signs, pts, axes=(0, 0))


def polygon_vertices(midpoints) -> np.ndarray:
    """Vertices of the odd-sided polygon with the given side midpoints.

    Side ``k`` runs from vertex ``k`` to vertex ``k+1`` (cyclically) and has
    midpoint ``midpoints[k]``.  The system is uniquely solvable only for odd
    ``N``; even ``N`` is rejected.
    """
    mids = _stack(midpoints, 3, "midpoints")
    N = mids.shape[0]
    if N % 2 == 0:
        raise ScenarioError("vertices are determined by midpoints only for odd N")
    verts = np.empty_like(mids)
    verts[0] = alternating_sum(mids)
    for k in range(N - 1):
        verts[k + 1] = 2.0 * mids[k] - verts[k]
    return verts


def chord_action(x1, x2) -> np.ndarray | float:
    """Exact ``integral p . dq`` along the straight chord from ``x1`` to ``x2``.

    Equals ``1/2 (p1 + p2) . (q2 - q1)``.
    """
    a = _as_points(x1, "x1")
    b = _as_points(x2, "x2")
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    n = a.shape[-1] // 2
    out = 0.5 * np.sum((a[..., n:] + b[..., n:]) * (b[..., :n] - a[..., :n]), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


class SegmentKind(str, enum.Enum):
    CHORD = "chord"
    TRAJECTORY_ARC = "trajectory_arc"
    FLOWED_CHORD = "flowed_chord"


@dataclass(frozen=True)
class Segment:
    """One oriented piece of a loop.

    Attributes
    ----------
    kind : SegmentKind
    start, end : ndarray
        Endpoints in traversal order.
    action : float
        ``integral p . dq`` along the segment in traversal order.
    direction : int
        ``+1`` for forward-in-time arcs, ``-1`` for backward; chords use ``+1``.
    source : object, optional
        The trajectory (or chord data) the segment was cut from.
    """

    kind: SegmentKind
    start: np.ndarray
    end: np.ndarray
    action: float
    direction: int = 1
    source: object = field(default=None, repr=False, compare=False)

    @classmethod
    def chord(cls, x1, x2) -> "Segment":
        a = np.asarray(x1, dtype=float)
        b = np.asarray(x2, dtype=float)
        return cls(SegmentKind.CHORD, a, b, float(chord_action(a, b)))

    @classmethod
    def arc(cls, trajectory, direction: int = 1, tol: float = DEFAULT_TOL.geom) -> "Segment":
        """Arc cut from a trajectory; ``direction=-1`` traverses it backwards.

        ``trajectory`` must expose ``start``, ``end`` and ``action`` (the
        accumulated ``integral p . dq`` from start to end).
        """
        if direction not in (1, -1):
            raise ScenarioError("direction must be +1 or -1")
        a, b = np.asarray(trajectory.start), np.asarray(trajectory.end)
        if direction == 1:
            return cls(SegmentKind.TRAJECTORY_ARC, a, b, float(trajectory.action), 1, trajectory)
        return cls(SegmentKind.TRAJECTORY_ARC, b, a, -float(trajectory.action), -1, trajectory)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))


class LoopLabel(str, enum.Enum):
    SCHRODINGER = "schrodinger_L~"
    HEISENBERG_W = "heisenberg_W"
    HEISENBERG_L = "heisenberg_L"
    TWO_SIDED_X = "two_sided_X"
    POLYGON = "polygon"


@dataclass(frozen=True)
class Loop:
    """Closed chain of segments."""

    segments: tuple
    label: LoopLabel = LoopLabel.POLYGON

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    def gap(self) -> float:
        """Largest mismatch between consecutive endpoints (cyclically)."""
        segs = self.segments
        if not segs:
            return 0.0
        gaps = [np.linalg.norm(segs[k].end - segs[(k + 1) % len(segs)].start) for k in range(len(segs))]
        return float(max(gaps))

    def is_closed(self, tol: float = DEFAULT_TOL.geom) -> bool:
        return self.gap() <= tol


def polygon_loop(midpoints) -> Loop:
    """Chord polygon for odd ``N`` traversed ``x_N -> ... -> x_1 -> x_N``.

    With this orientation ``loop_area(polygon_loop(m)) == polygon_phase(m)``.
    """
    mids = _stack(midpoints, 3, "midpoints")[::-1]
    verts = polygon_vertices(mids)
    N = verts.shape[0]
    segs = [Segment.chord(verts[k], verts[(k + 1) % N]) for k in range(N)]
    return Loop(segs, LoopLabel.POLYGON)


def loop_area(loop: Loop, tol: float = DEFAULT_TOL.geom) -> float:
    """Sum of segment actions, ``oint p . dq``, after a closure check.

    Raises
    ------
    ClosureError
        If consecutive segments do not share endpoints within ``tol``.
    """
    gap = loop.gap()
    scale = max(1.0, max((float(np.max(np.abs(s.start))) for s in loop.segments), default=1.0))
    if gap > tol * scale:
        raise ClosureError(gap)
    return float(sum(s.action for s in loop.segments))


def is_symplectic(R, tol: float = DEFAULT_TOL.mat) -> bool:
    """Whether ``R^T J R = J`` entrywise within ``tol``."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] % 2:
        return False
    Jm = symplectic_matrix(R.shape[0] // 2)
    return bool(np.max(np.abs(R.T @ Jm @ R - Jm)) <= tol)


@dataclass(frozen=True)
class AffineMap:
    """Affine canonical map ``A(x) = R^{-1}(x - x0)`` with symplectic ``R``."""

    R: np.ndarray
    x0: np.ndarray
    tol: float = DEFAULT_TOL.mat

    def __post_init__(self):
        R = np.array(self.R, dtype=float)
        x0 = np.array(self.x0, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] != x0.shape[-1]:
            raise DimensionError(f"R shape {R.shape} incompatible with x0 shape {x0.shape}")
        if not is_symplectic(R, self.tol):
            Jm = symplectic_matrix(R.shape[0] // 2)
            dev = float(np.max(np.abs(R.T @ Jm @ R - Jm)))
            raise ScenarioError(f"R is not symplectic: max |R^T J R - J| = {dev:.3e}")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "_Rinv", np.linalg.inv(R))

    @classmethod
    def identity(cls, n: int) -> "AffineMap":
        return cls(np.eye(2 * n), np.zeros(2 * n))

    @classmethod
    def translation(cls, x0) -> "AffineMap":
        x0 = np.asarray(x0, dtype=float)
        return cls(np.eye(x0.shape[-1]), x0)

    @classmethod
    def rotation(cls, angle: float, x0=(0.0, 0.0)) -> "AffineMap":
        """Phase-plane rotation for ``n = 1``."""
        c, s = np.cos(angle), np.sin(angle)
        return cls(np.array([[c, -s], [s, c]]), np.asarray(x0, dtype=float))

    def apply(self, x) -> np.ndarray:
        """``R^{-1}(x - x0)``."""
        x = _as_points(x)
        return (x - self.x0) @ self._Rinv.T

    def inverse_apply(self, x) -> np.ndarray:
        """``A^{-1}(x) = R x + x0``."""
        x = _as_points(x)
        return x @ self.R.T + self.x0


def affine_apply(A: AffineMap, x) -> np.ndarray:
    """Apply ``A(x) = R^{-1}(x - x0)``."""
    return A.apply(x)
