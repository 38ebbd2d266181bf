"""Grid Weyl calculus for one degree of freedom.

Discretisation
--------------
Operator kernels live on a uniform position grid ``Q_a = q_min + a dq``
(``a = 0..N-1``).  Weyl symbols live on the grid of chord midpoints
``q_s = q_min + s dq / 2`` (``s = 0..2N-2``) times the momenta
``p_j = j dp`` with ``dp = pi hbar / (P dq)`` and ``j = -P/2..P/2-1``.

For a midpoint index ``s`` the available chords are ``v = l dq`` with
``l = a - b`` of the same parity as ``s``; they are spaced by ``2 dq``, so

``f(q_s, p_j) = 2 dq sum_l K_{a b} exp(-i pi j l / P)``  and
``K_{a b} = dp / (2 pi hbar) sum_j f(q_s, p_j) exp(i pi j l / P)``

are exact inverses as long as ``P >= N``.  Symbols are faithfully represented
when their momentum content stays inside ``|p| < pi hbar / (2 dq)``, which is
the symbol window.  Within it the kernel products below reproduce the
continuous star product to spectral accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy.optimize import brentq

from .bc_solver import solve_short_time
from .classical_flow import flow_batch, quadratic_propagate
from .config import DEFAULT_TOL, Tolerances
from .errors import AliasingError, ContractionError, DimensionError, ScenarioError
from .expressions import coordinate_symbols, parse_expression
from .hamiltonian_model import HamiltonianModel, InitialPhaseData, zero_phase_data
from .phase_geometry import apply_J, chord_action, polygon_phase, symplectic_matrix
from .sps_dynamics import ProblemKind
from .symbol_grid import SymbolGrid, grid_points
from .wkb_evolution import sheet_values

__all__ = [
    "WaveFunction",
    "WeylGrid",
    "wigner_transform",
    "star_product",
    "star_product3",
    "PureStateWkbSymbol",
    "pure_state_symbol",
    "CompositionResult",
    "stationary_phase_compose",
]

#: Relative magnitude allowed in the outer tenth of the momentum window.
EDGE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Samples of a one-dimensional wave function on a uniform grid."""

    q: np.ndarray
    values: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if q.ndim != 1 or v.shape != q.shape:
            raise DimensionError("wave function needs matching one-dimensional q and values")
        if len(q) < 4 or np.max(np.abs(np.diff(q, 2))) > 1e-9 * max(1.0, np.max(np.abs(q))):
            raise ScenarioError("wave function grid must be uniform with at least four points")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "values", v)

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0])

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.dq))

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.q, self.values / self.norm(), self.hbar)

    @classmethod
    def from_function(cls, fn, q, hbar: float = 1.0) -> "WaveFunction":
        q = np.asarray(q, dtype=float)
        return cls(q, fn(q), hbar)


class WeylGrid:
    """Paired kernel and symbol grids (see the module docstring).

    Parameters
    ----------
    q_min, q_max : float
        Ends of the kernel grid.
    n_points : int
        Number ``N`` of kernel grid points.
    hbar : float
    n_p : int, optional
        Number ``P`` of momentum samples; defaults to ``N`` rounded up to even.
    """

    def __init__(self, q_min: float, q_max: float, n_points: int, hbar: float = 1.0, n_p: int | None = None):
        if n_points < 4 or not q_max > q_min:
            raise ScenarioError("need q_max > q_min and at least four kernel points")
        if hbar <= 0:
            raise ScenarioError("hbar must be positive")
        self.N = int(n_points)
        P = self.N if n_p is None else int(n_p)
        P += P % 2
        if P < self.N:
            raise ScenarioError(f"need at least {self.N} momentum samples, got {P}")
        self.P = P
        self.hbar = float(hbar)
        self.kernel_q = np.linspace(q_min, q_max, self.N)
        self.dq = float(self.kernel_q[1] - self.kernel_q[0])
        self.q = q_min + 0.5 * self.dq * np.arange(2 * self.N - 1)
        self.dp = np.pi * self.hbar / (self.P * self.dq)
        self.j = np.arange(-self.P // 2, self.P // 2)
        self.p = self.j * self.dp
        a = np.arange(self.N)
        self._s = a[:, None] + a[None, :]
        self._l = a[:, None] - a[None, :]

    # -- geometry ----------------------------------------------------------
    @property
    def axes(self) -> tuple:
        return (self.q, self.p)

    @property
    def shape(self) -> tuple:
        return (len(self.q), len(self.p))

    @property
    def p_max(self) -> float:
        """Edge of the symbol window, ``pi hbar / (2 dq)``."""
        return np.pi * self.hbar / (2 * self.dq)

    @property
    def points(self) -> np.ndarray:
        return grid_points(self.axes)

    def same_as(self, other: "WeylGrid") -> bool:
        return (self.N == other.N and self.P == other.P and self.hbar == other.hbar
                and np.array_equal(self.kernel_q, other.kernel_q))

    @classmethod
    def from_symbol_grid(cls, g: SymbolGrid) -> "WeylGrid":
        """Recover the discretisation from a grid produced by this class."""
        if len(g.axes) != 2:
            raise DimensionError("grid Weyl calculus is one-dimensional (two phase-space axes)")
        q, p = g.axes
        if len(q) % 2 == 0:
            raise DimensionError("symbol q axis must have 2N - 1 points")
        N = (len(q) + 1) // 2
        W = cls(q[0], q[-1], N, g.hbar, len(p))
        if not (np.allclose(W.q, q, rtol=0, atol=1e-12 * max(1.0, abs(q[-1])))
                and np.allclose(W.p, p, rtol=0, atol=1e-12 * max(1.0, abs(p[0])))):
            raise DimensionError("symbol grid axes are not a Weyl grid discretisation")
        return W

    # -- transforms -------------------------------------------------------
    def kernel_to_symbol(self, K) -> np.ndarray:
        """Weyl symbol of the kernel ``K[a, b]`` (shape ``(N, N)``)."""
        K = np.asarray(K, dtype=complex)
        if K.shape != (self.N, self.N):
            raise DimensionError(f"kernel must be {(self.N, self.N)}, got {K.shape}")
        L = 2 * self.P
        buf = np.zeros((2 * self.N - 1, L), dtype=complex)
        buf[self._s, self._l % L] = K
        F = np.fft.fft(buf, axis=1)
        return 2 * self.dq * F[:, self.j % L]

    def symbol_to_kernel(self, f) -> np.ndarray:
        """Kernel ``K[a, b]`` of the symbol sampled on :attr:`axes`."""
        f = np.asarray(f, dtype=complex)
        if f.shape != self.shape:
            raise DimensionError(f"symbol must be {self.shape}, got {f.shape}")
        L = 2 * self.P
        buf = np.zeros((2 * self.N - 1, L), dtype=complex)
        buf[:, self.j % L] = f
        G = np.fft.ifft(buf, axis=1) * L * self.dp / (2 * np.pi * self.hbar)
        return G[self._s, self._l % L]

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(X)`` with ``X`` of shape ``(..., 2)`` on the symbol grid."""
        Q, P = np.meshgrid(self.q, self.p, indexing="ij")
        return np.asarray(fn(np.stack([Q, P], axis=-1)), dtype=complex)

    def trace(self, f) -> complex:
        """``(2 pi hbar)^{-1} int f dq dp`` on the symbol grid."""
        return complex(np.sum(f) * 0.5 * self.dq * self.dp / (2 * np.pi * self.hbar))

    def edge_fraction(self, f) -> float:
        """Largest ``|f|`` in the outer tenth of the momentum window, relative to ``max |f|``."""
        a = np.abs(np.asarray(f))
        peak = a.max()
        if peak == 0:
            return 0.0
        edge = np.abs(self.p) > 0.9 * self.p_max
        return float(a[:, edge].max() / peak)

    def symbol_grid(self, values, t: float = 0.0, kind: str = "symbol", meta: dict | None = None) -> SymbolGrid:
        m = {"weyl_grid": {"q_min": float(self.kernel_q[0]), "q_max": float(self.kernel_q[-1]),
                           "n_points": self.N, "n_p": self.P}}
        m.update(meta or {})
        return SymbolGrid(self.axes, values, float(t), self.hbar, kind, meta=m)

    def kernel_of_wave(self, psi: WaveFunction) -> np.ndarray:
        if len(psi.q) != self.N or not np.allclose(psi.q, self.kernel_q, atol=1e-12):
            raise DimensionError("wave function grid differs from the kernel grid")
        return np.outer(psi.values, np.conj(psi.values))


def _check_band(psi: WaveFunction, alias_tol: float):
    v = psi.values
    peak = np.max(np.abs(v))
    if peak == 0:
        raise ScenarioError("wave function vanishes identically")
    if max(abs(v[0]), abs(v[-1])) > 1e-8 * peak:
        raise AliasingError("wave function does not decay at the grid boundary")
    spec = np.abs(np.fft.fft(v)) ** 2
    k = np.abs(np.fft.fftfreq(len(v), psi.dq)) * 2 * np.pi
    outside = spec[k > np.pi / (2 * psi.dq)].sum() / spec.sum()
    if outside > alias_tol:
        raise AliasingError(
            f"momentum content beyond the symbol window: fraction {outside:.1e}; refine dq or raise hbar")


def wigner_transform(psi: WaveFunction, n_p: int | None = None, alias_tol: float = 1e-12) -> SymbolGrid:
    """Weyl symbol ``int dv e^{-i p v / hbar} psi(q + v/2) conj(psi(q - v/2))``.

    Raises
    ------
    AliasingError
        If the wave function reaches the grid edge or carries momenta outside
        the symbol window.
    """
    _check_band(psi, alias_tol)
    W = WeylGrid(psi.q[0], psi.q[-1], len(psi.q), psi.hbar, n_p)
    f = W.kernel_to_symbol(np.outer(psi.values, np.conj(psi.values)))
    return W.symbol_grid(f, kind="wigner")


def _weyl_pair(f: SymbolGrid, g: SymbolGrid) -> WeylGrid:
    W = WeylGrid.from_symbol_grid(f)
    if not W.same_as(WeylGrid.from_symbol_grid(g)):
        raise DimensionError("star product operands live on different grids or hbar")
    return W


def star_product(f: SymbolGrid, g: SymbolGrid, check: bool = True) -> SymbolGrid:
    """Moyal product ``f * g`` through kernel composition on the Weyl grid.

    Raises
    ------
    AliasingError
        If ``check`` and the product reaches the edge of the momentum window.
    """
    W = _weyl_pair(f, g)
    K = W.symbol_to_kernel(f.values) @ W.symbol_to_kernel(g.values) * W.dq
    out = W.kernel_to_symbol(K)
    if check and W.edge_fraction(out) > EDGE_TOL:
        raise AliasingError(f"product leaks to the momentum window edge ({W.edge_fraction(out):.1e})")
    return W.symbol_grid(out, f.t, "star", {"edge_fraction": W.edge_fraction(out)})


def star_product3(f: SymbolGrid, g: SymbolGrid, h: SymbolGrid, check: bool = True) -> SymbolGrid:
    """``(f * g) * h``; the associativity defect against ``f * (g * h)`` is stored in ``meta``."""
    W = _weyl_pair(f, g)
    _weyl_pair(g, h)
    Kf, Kg, Kh = (W.symbol_to_kernel(x.values) for x in (f, g, h))
    left = W.kernel_to_symbol((Kf @ Kg * W.dq) @ Kh * W.dq)
    right = W.kernel_to_symbol(Kf @ (Kg @ Kh * W.dq) * W.dq)
    if check and W.edge_fraction(left) > EDGE_TOL:
        raise AliasingError(f"product leaks to the momentum window edge ({W.edge_fraction(left):.1e})")
    defect = float(np.max(np.abs(left - right)))
    return W.symbol_grid(left, f.t, "star3", {"associativity_defect": defect,
                                              "edge_fraction": W.edge_fraction(left)})


# ---------------------------------------------------------------------------
# pure-state WKB symbol
# ---------------------------------------------------------------------------

def _q_callables(src):
    """``(s, s', s'')`` from an expression in ``q`` or a tuple of three callables."""
    if isinstance(src, str):
        syms, names = coordinate_symbols(1)
        expr = parse_expression(src, 1, allow_time=False)
        if expr.free_symbols - {names["q"]}:
            raise ScenarioError(f"{src!r} must depend on q only")
        q = names["q"]
        return tuple(sp.lambdify(q, e, "numpy") for e in (expr, sp.diff(expr, q), sp.diff(expr, q, 2)))
    fns = tuple(src)
    if len(fns) != 3:
        raise ScenarioError("pass the phase as an expression or as (s, ds, d2s) callables")
    return fns


def _q_fn(src):
    if callable(src):
        return src
    return _q_callables(src)[0]


@dataclass(frozen=True, eq=False)
class PureStateWkbSymbol:
    """Chord-midpoint asymptotics of the Wigner symbol of ``n(q) exp(i s(q) / hbar)``.

    Per grid point and per chord (up to ``k`` chords, padded with ``nan``):
    half-length root ``v > 0``, endpoints ``x_plus`` and ``x_minus``, the loop
    phase ``S0``, the prefactor ``|phi''|^{-1/2} n(q+) n(q-)`` and the sign of
    ``phi''``.  ``status`` is ``0`` (valid), ``2`` (no chord) or ``1``
    (caustic).
    """

    axes: tuple
    v: np.ndarray
    x_plus: np.ndarray
    x_minus: np.ndarray
    S0: np.ndarray
    S0_direct: np.ndarray
    prefactor: np.ndarray
    signature: np.ndarray
    status: np.ndarray
    meta: dict = field(default_factory=dict)

    def value(self, hbar: float) -> np.ndarray:
        """``sum_chords sqrt(2 pi hbar) prefactor 2 cos(S0 / hbar + pi/4 sgn)``; zero where masked."""
        term = np.sqrt(2 * np.pi * hbar) * self.prefactor * 2 * np.cos(self.S0 / hbar + 0.25 * np.pi * self.signature)
        out = np.nansum(term, axis=-1)
        return np.where(self.status == 0, out, 0.0)

    def root_residual(self, ds) -> float:
        qp, qm = self.x_plus[..., 0], self.x_minus[..., 0]
        Q, P = np.meshgrid(*self.axes, indexing="ij")
        res = np.abs(ds(qp) + ds(qm) - 2 * P[..., None])
        return float(np.nanmax(res)) if np.isfinite(res).any() else 0.0


def pure_state_symbol(n_amp, s_phase, axes, hbar: float = 1.0, v_max: float | None = None,
                      n_scan: int = 400, max_chords: int = 4, tol: Tolerances = DEFAULT_TOL) -> PureStateWkbSymbol:
    """Solve ``2p = s'(q - v/2) + s'(q + v/2)`` for chords and build the symbol data.

    Parameters
    ----------
    n_amp : str or callable
        Amplitude ``n(q)``.
    s_phase : str or tuple of callables
        Phase ``s(q)`` as an expression in ``q`` or ``(s, s', s'')``.
    axes : (q, p) arrays
    v_max : float, optional
        Largest chord length scanned (default: the q-extent of the grid).

    Roots are bracketed on a scan of ``v`` in ``(0, v_max]`` and polished with
    Brent's method.  The phase ``S0`` is the area of the loop made of the
    curve arc from ``x-`` to ``x+`` and the chord back; ``S0_direct`` is the
    stationary value ``s(q+) - s(q-) - p v`` for comparison.
    """
    s, ds, d2s = _q_callables(s_phase)
    n_fn = _q_fn(n_amp)
    qa, pa = (np.asarray(a, dtype=float) for a in axes)
    if v_max is None:
        v_max = 2.0 * (qa[-1] - qa[0])
    vs = np.linspace(v_max / n_scan, v_max, n_scan)
    shape = (len(qa), len(pa), max_chords)
    V = np.full(shape, np.nan)
    for i, q in enumerate(qa):
        mean = 0.5 * (ds(q + 0.5 * vs) + ds(q - 0.5 * vs))
        for k, p in enumerate(pa):
            F = mean - p
            idx = np.flatnonzero(np.sign(F[:-1]) * np.sign(F[1:]) < 0)
            exact = np.flatnonzero(F == 0)
            found = []
            for b in idx[:max_chords]:
                g = lambda v, q=q, p=p: 0.5 * (ds(q + 0.5 * v) + ds(q - 0.5 * v)) - p  # noqa: E731
                found.append(brentq(g, vs[b], vs[b + 1], xtol=1e-14, rtol=1e-15))
            found.extend(vs[exact].tolist())
            for c, v in enumerate(sorted(found)[:max_chords]):
                V[i, k, c] = v
    Q = qa[:, None, None]
    P = pa[None, :, None]
    qp, qm = Q + 0.5 * V, Q - 0.5 * V
    pp, pm = ds(qp), ds(qm)
    x_plus = np.stack(np.broadcast_arrays(qp, pp), axis=-1)
    x_minus = np.stack(np.broadcast_arrays(qm, pm), axis=-1)
    arc = s(qp) - s(qm)
    S0 = arc + chord_action(x_plus, x_minus)
    S0_direct = arc - P * V
    phi2 = 0.25 * (d2s(qp) - d2s(qm))
    with np.errstate(divide="ignore", invalid="ignore"):
        pref = np.abs(phi2) ** -0.5 * n_fn(qp) * n_fn(qm)
    caustic = np.isfinite(V) & (np.abs(phi2) < tol.caustic ** 0.5)
    status = np.where(np.isfinite(V).any(axis=-1), 0, 2).astype(np.int8)
    status[caustic.any(axis=-1)] = 1
    return PureStateWkbSymbol((qa, pa), V, x_plus, x_minus, S0, S0_direct,
                              np.where(np.isfinite(V), pref, np.nan), np.sign(phi2), status)


# ---------------------------------------------------------------------------
# stationary-phase composition U * rho0 * conj(U)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompositionResult:
    """Outcome of :func:`stationary_phase_compose` at one point.

    ``value`` is the stationary-phase composition; ``theta`` the total phase
    at the critical point; ``x1``, ``x2``, ``x3`` the critical points (the
    middle one is ``x1 + x3 - x``); ``signature`` the signature of the phase
    Hessian; ``det_identity_defect`` the relative mismatch between the
    composed prefactor and ``|det grad M|^{-1/2}``; ``midpoint_defect`` the
    distance to the midpoints of the four-sided loop; ``reference`` the
    direct semiclassical value and ``theta_defect`` the mismatch between
    ``theta`` and its phase.
    """

    value: complex
    theta: float
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    signature: int
    det_identity_defect: float
    midpoint_defect: float
    reference: complex
    theta_defect: float = 0.0
    converged: bool = True
    iterations: int = 0


def _u_data(H, X, t, tol, full=True):
    """Zero-phase propagator symbol data at the points ``X`` (shape ``(m, 2n)``).

    Returns the phases, gradients ``J (l_t - l_0)``, Hessians
    ``2 J (G - I)(G + I)^{-1}`` and prefactors; with ``full=False`` only the
    gradients.
    """
    zero = zero_phase_data(H.n)
    sheets = solve_short_time(H, ProblemKind.SCHRODINGER, zero, X, t, tol)
    l0 = np.array([sh.l0 for sh in sheets])
    lt = np.array([sh.lt for sh in sheets])
    grad = apply_J(lt - l0)
    if not full:
        return grad
    phase, amp = sheet_values(sheets, zero)
    if H.is_quadratic:
        G = np.broadcast_to(quadratic_propagate(H, 0.0, t, tol).K, (len(X), H.dim, H.dim))
    else:
        G = flow_batch(H, l0, t, tol=tol).jacobi
    eye = np.eye(H.dim)
    hess = 2 * symplectic_matrix(H.n) @ (G - eye) @ np.linalg.inv(G + eye)
    return phase, grad, 0.5 * (hess + np.swapaxes(hess, -1, -2)), amp


def stationary_phase_compose(H: HamiltonianModel, rho0: InitialPhaseData, t: float, x, hbar: float = 1.0,
                             tol: Tolerances = DEFAULT_TOL, max_iter: int = 200):
    """Stationary-phase evaluation of ``U(t) * rho0 * conj(U(t))`` at ``x``.

    The triple product has phase
    ``Theta(x1, x3) = Phi(x1) + S0(x1 + x3 - x) - Phi(x3) + P3(x3, x, x1)``
    and the critical points solve

    ``x1 = x + 1/2 J grad Phi(x3) - 1/2 J grad S0(x2)`` and
    ``x3 = x + 1/2 J grad Phi(x1) + 1/2 J grad S0(x2)``,

    iterated to a fixed point from ``x1 = x3 = x``.  The prefactor is
    ``2^{2n} N(x1) N(x3) alpha0(x2) |det Theta''|^{-1/2}`` with the phase
    ``exp(i Theta / hbar + i pi sgn(Theta'') / 4)``.

    ``x`` may be one point or a batch ``(m, 2n)``; a batch returns a list and
    runs the iteration for all points together.

    Raises
    ------
    ContractionError
        If the fixed-point iteration does not converge (inconclusive).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    m = len(X)
    n = H.n
    Jm = symplectic_matrix(n)
    if t == 0.0:
        out = []
        for xi in X:
            val = complex(rho0.amplitude(xi) * np.exp(1j * rho0.phase(xi) / hbar))
            out.append(CompositionResult(val, float(rho0.phase(xi)), xi, xi, xi, 0, 0.0, 0.0, val))
        return out[0] if single else out
    x1 = X.copy()
    x3 = X.copy()
    it = 0
    for it in range(1, max_iter + 1):
        g2 = rho0.phase_grad(x1 + x3 - X)
        gr = _u_data(H, np.concatenate([x1, x3]), t, tol, full=False)
        n1 = X + 0.5 * apply_J(gr[m:]) - 0.5 * apply_J(g2)
        n3 = X + 0.5 * apply_J(gr[:m]) + 0.5 * apply_J(g2)
        step = max(np.max(np.abs(n1 - x1)), np.max(np.abs(n3 - x3)))
        x1, x3 = n1, n3
        if step < tol.bc:
            break
    else:
        raise ContractionError("critical-point iteration did not converge")
    x2 = x1 + x3 - X
    ph, _, hs, Ns = _u_data(H, np.concatenate([x1, x3]), t, tol)
    S0pp = rho0.phase_hess(x2)
    theta = ph[:m] + rho0.phase(x2) - ph[m:] + polygon_phase(np.stack([x3, X, x1]))
    sheets = solve_short_time(H, ProblemKind.HEISENBERG, rho0, X, t, tol)
    S, alpha = sheet_values(sheets, rho0)
    out = []
    for k in range(m):
        hess = np.block([[hs[k] + S0pp[k], S0pp[k] + 2 * Jm], [S0pp[k] - 2 * Jm, -hs[m + k] + S0pp[k]]])
        ev = np.linalg.eigvalsh(0.5 * (hess + hess.T))
        sig = int(np.sum(ev > 0) - np.sum(ev < 0))
        pref = 2.0 ** (2 * n) * Ns[k] * Ns[m + k] * abs(np.prod(ev)) ** -0.5
        value = complex(pref * rho0.amplitude(x2[k]) * np.exp(1j * theta[k] / hbar + 0.25j * np.pi * sig))
        sh = sheets[k]
        reference = complex(alpha[k] * np.exp(1j * S[k] / hbar))
        mid = max(np.max(np.abs(x2[k] - sh.x0)), np.max(np.abs(x1[k] - 0.5 * (sh.l0 + sh.lt))),
                  np.max(np.abs(x3[k] - 0.5 * (sh.r0 + sh.rt))))
        out.append(CompositionResult(value, float(theta[k]), x1[k], x2[k], x3[k], sig,
                                     float(abs(pref * abs(sh.detM) ** 0.5 - 1.0)), float(mid), reference,
                                     float(abs(theta[k] - S[k])), True, it))
    return out[0] if single else out
