"""Symplectic-area WKB fields for the propagator and the density matrix.

For every root of the boundary problem at ``(t, x)`` a closed loop of chords
and trajectory arcs is built; its ``oint p . dq`` gives the sheet phase:

* Schrodinger loop ``C(r0, l0) + T+(l0, lt) + C(lt, r0)`` and
  ``Phi = Phi0(x0) + oint - int_0^t H(g(tau | l0)) dtau``;
* Heisenberg four-sided loop ``W = C(r0, l0) + T+(l0, lt) + C(lt, rt) + T-(rt, r0)``
  and the two-sided loop ``L = C(lt, rt) + g_t(C(r0, l0))``, related by
  ``oint_W - oint_L = int H(g(.|l0)) - int H(g(.|r0))``, with
  ``S = S0(x0) + oint_L``.

The amplitude is ``|det grad M_t(x0)|^{-1/2}`` times the initial amplitude
and every sheet carries ``exp(-i pi m / 2)`` with its Maslov index ``m``.

With these conventions the phases satisfy

``d_t Phi + H(x - 1/2 J grad Phi) = 0`` and
``d_t S + H(x - 1/2 J grad S) - H(x + 1/2 J grad S) = 0``,

which is what :func:`hj_residual` evaluates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .bc_solver import BcSheet, PointStatus, midpoint_jacobian, solve_points, solve_short_time
from .classical_flow import flow_batch, flowed_chord_action, quadratic_propagate
from .config import DEFAULT_TOL, Tolerances
from .errors import CausticError, PoincareCartanError, ScenarioError
from .hamiltonian_model import HamiltonianModel, InitialPhaseData, compose_affine, zero_phase_data
from .phase_geometry import (
    AffineMap,
    Loop,
    LoopLabel,
    Segment,
    SegmentKind,
    apply_J,
    chord_action,
    loop_area,
    polygon_phase,
)
from .sps_dynamics import LagrangianManifold, ProblemKind, advance_manifold
from .symbol_grid import STATUS_CODES, SymbolGrid, WkbSheetValue, grid_points, sheet_sum

__all__ = [
    "build_loop",
    "schrodinger_phase",
    "heisenberg_phase",
    "sheet_values",
    "evaluate_points",
    "u_semiclassical",
    "rho_semiclassical",
    "quadratic_exact_u",
    "quadratic_exact_rho",
    "quadratic_u_points",
    "quadratic_rho_points",
    "single_sheet_phase",
    "hj_residual_points",
    "hj_residual",
    "poincare_cartan_defect",
    "AdditivityReport",
    "additivity_check",
    "covariance_check",
    "PointEvaluation",
    "CausticEvent",
    "caustic_times",
]

PC_TOL = 1e-6


# ---------------------------------------------------------------------------
# loops and per-sheet phases
# ---------------------------------------------------------------------------

def build_loop(sheet: BcSheet, which: str = "auto", H: HamiltonianModel | None = None,
               tol: Tolerances = DEFAULT_TOL) -> Loop:
    """Closed loop of a boundary-problem root.

    ``which`` is ``"L~"`` (Schrodinger), ``"W"`` or ``"L"`` (Heisenberg);
    ``"auto"`` picks ``"L~"`` or ``"W"`` from the sheet kind.  The ``"L"``
    loop needs ``H`` to flow the initial chord.
    """
    if which == "auto":
        which = "L~" if sheet.kind is ProblemKind.SCHRODINGER else "W"
    arc_l = Segment.arc(sheet.left)
    if which == "L~":
        if sheet.kind is not ProblemKind.SCHRODINGER:
            raise ScenarioError("the three-sided loop belongs to the Schrodinger problem")
        loop = Loop([Segment.chord(sheet.r0, sheet.l0), arc_l, Segment.chord(sheet.lt, sheet.r0)],
                    LoopLabel.SCHRODINGER)
    elif which == "W":
        if sheet.kind is not ProblemKind.HEISENBERG:
            raise ScenarioError("the four-sided loop belongs to the Heisenberg problem")
        loop = Loop([Segment.chord(sheet.r0, sheet.l0), arc_l, Segment.chord(sheet.lt, sheet.rt),
                     Segment.arc(sheet.right, -1)], LoopLabel.HEISENBERG_W)
    elif which == "L":
        if H is None:
            raise ScenarioError("the two-sided Heisenberg loop needs the Hamiltonian")
        action, start, end = flowed_chord_action(H, sheet.r0, sheet.l0, sheet.t, tol=tol)
        flowed = Segment(SegmentKind.FLOWED_CHORD, start, end, float(action))
        loop = Loop([Segment.chord(sheet.lt, sheet.rt), flowed], LoopLabel.HEISENBERG_L)
    else:
        raise ScenarioError(f"unknown loop {which!r}")
    if not loop.is_closed(tol.geom * max(1.0, float(np.max(np.abs(sheet.x0))))):
        from .errors import ClosureError

        raise ClosureError(loop.gap())
    return loop


def schrodinger_phase(sheet: BcSheet, phase0: InitialPhaseData) -> float:
    """``Phi0(x0) + oint_{L~} p . dq - int_0^t H(g(tau | l0)) dtau``."""
    return float(phase0.phase(sheet.x0)) + loop_area(build_loop(sheet, "L~")) - sheet.left.ham_integral


def heisenberg_phase(sheet: BcSheet, phase0: InitialPhaseData, H: HamiltonianModel | None = None,
                     tol: Tolerances = DEFAULT_TOL) -> float:
    """``S0(x0) + oint_L p . dq``.

    The value is obtained from the four-sided loop.  When ``H`` is given the
    two-sided loop is also evaluated and the two routes are compared.

    Raises
    ------
    PoincareCartanError
        If the routes differ by more than ``1e-6``.
    """
    s0 = float(phase0.phase(sheet.x0))
    w = loop_area(build_loop(sheet, "W"))
    S = s0 + w - sheet.left.ham_integral + sheet.right.ham_integral
    if H is not None:
        S_l = s0 + loop_area(build_loop(sheet, "L", H, tol))
        if abs(S_l - S) > PC_TOL:
            raise PoincareCartanError(f"loop routes disagree: W gives {S:.12g}, L gives {S_l:.12g}")
    return S


def sheet_values(sheets, phase0: InitialPhaseData) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised phases and amplitudes for a list of sheets of one kind."""
    if not sheets:
        return np.zeros(0), np.zeros(0)
    x0 = np.array([s.x0 for s in sheets])
    l0 = np.array([s.l0 for s in sheets])
    r0 = np.array([s.r0 for s in sheets])
    lt = np.array([s.lt for s in sheets])
    rt = np.array([s.rt for s in sheets])
    al = np.array([s.left.action for s in sheets])
    hl = np.array([s.left.ham_integral for s in sheets])
    det = np.array([s.detM for s in sheets])
    base = phase0.phase(x0)
    if sheets[0].kind is ProblemKind.SCHRODINGER:
        phase = base + chord_action(r0, l0) + al + chord_action(lt, r0) - hl
    else:
        ar = np.array([s.right.action for s in sheets])
        hr = np.array([s.right.ham_integral for s in sheets])
        phase = base + chord_action(r0, l0) + al + chord_action(lt, rt) - ar - hl + hr
    amp = np.abs(det) ** -0.5 * phase0.amplitude(x0)
    return np.atleast_1d(phase), np.atleast_1d(amp)


# ---------------------------------------------------------------------------
# point and grid assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PointEvaluation:
    """Sheets, sheet values and classification for a batch of points."""

    points: np.ndarray
    status: np.ndarray
    sheets: list
    values: list
    diagnostics: list
    pc_defect: float = float("nan")

    def field(self, hbar: float, cos_mode: bool = False) -> np.ndarray:
        return np.array([sheet_sum(v, hbar, cos_mode) for v in self.values])


def _auto_manifold(H, kind, phase0, X, t, tol, threads, manifold, resolution):
    if manifold is None or isinstance(manifold, LagrangianManifold):
        if isinstance(manifold, LagrangianManifold) and manifold.t != t:
            return advance_manifold(manifold, H, t, tol, threads)
        return manifold
    if manifold != "auto":
        raise ScenarioError(f"manifold must be 'auto', None or a LagrangianManifold, got {manifold!r}")
    if t == 0.0:
        return None
    if phase0.zero_phase and (kind is ProblemKind.HEISENBERG or H.is_quadratic):
        return None
    lo, hi = X.min(axis=0), X.max(axis=0)
    pad = 0.25 * np.maximum(hi - lo, 1.0)
    slo, shi = phase0.support
    lo = np.maximum(lo - pad, slo)
    hi = np.minimum(hi + pad, shi)
    M = LagrangianManifold.sample(phase0, kind, lo, hi, resolution)
    return advance_manifold(M, H, t, tol, threads)


def evaluate_points(H: HamiltonianModel, kind, phase0: InitialPhaseData, t: float, X,
                    tol: Tolerances = DEFAULT_TOL, threads: int = 1, manifold="auto",
                    resolution: int = 48, cross_check: int = 64) -> PointEvaluation:
    """Boundary solve plus sheet phases and amplitudes at arbitrary points.

    ``cross_check`` Heisenberg sheets (a deterministic, evenly spaced subset)
    are re-evaluated through the two-sided loop; the largest discrepancy is
    stored as ``pc_defect`` and flagged in the diagnostics when above
    ``1e-6``.
    """
    kind = ProblemKind.parse(kind)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    man = _auto_manifold(H, kind, phase0, X, t, tol, threads, manifold, resolution)
    cls = solve_points(H, kind, phase0, X, t, manifold=man, tol=tol, threads=threads)
    status = np.array([STATUS_CODES[c.status.value] for c in cls], dtype=np.int8)
    flat = [s for c in cls for s in c.sheets]
    phase, amp = sheet_values(flat, phase0)
    values, sheets, k = [], [], 0
    for c in cls:
        vals = []
        for s in c.sheets:
            vals.append(WkbSheetValue(float(phase[k]), float(amp[k]), int(s.maslov), int(s.sheet_id)))
            k += 1
        if c.status is not PointStatus.NONFOCAL:
            vals = []
        values.append(vals)
        sheets.append(list(c.sheets))
    diags = [list(c.diagnostics) for c in cls]
    pc = float("nan")
    if kind is ProblemKind.HEISENBERG and flat and cross_check and t != 0.0:
        idx = np.unique(np.linspace(0, len(flat) - 1, min(cross_check, len(flat))).astype(int))
        sub = [flat[i] for i in idx]
        r0 = np.array([s.r0 for s in sub])
        l0 = np.array([s.l0 for s in sub])
        lt = np.array([s.lt for s in sub])
        rt = np.array([s.rt for s in sub])
        act, _, _ = flowed_chord_action(H, r0, l0, t, tol=tol)
        S_l = phase0.phase(np.array([s.x0 for s in sub])) + chord_action(lt, rt) + act
        pc = float(np.max(np.abs(S_l - phase[idx])))
        if pc > PC_TOL:
            diags[0].append(f"Poincare-Cartan cross-check: loop routes differ by {pc:.2e}")
    return PointEvaluation(X, status, sheets, values, diags, pc)


def _grid_field(kind, H, phase0, t, axes, hbar, tol, threads, manifold, resolution, cos_mode, meta):
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    if len(axes) != H.dim:
        raise ScenarioError(f"need {H.dim} grid axes, got {len(axes)}")
    X = grid_points(axes)
    ev = evaluate_points(H, kind, phase0, t, X, tol, threads, manifold, resolution)
    shape = tuple(len(a) for a in axes)
    values = ev.field(hbar, cos_mode).reshape(shape)
    dets = [min((abs(s.detM) for s in sh), default=np.inf) for sh in ev.sheets]
    near = int(np.sum(np.asarray(dets) < np.sqrt(tol.caustic)))
    m = dict(meta or {})
    m.update(pc_defect=ev.pc_defect, near_caustic=near,
             diagnostics=[f"point {i}: {d}" for i, ds in enumerate(ev.diagnostics) for d in ds][:50])
    return SymbolGrid(axes, values, float(t), float(hbar), ProblemKind.parse(kind).value,
                      ev.status.reshape(shape), ev.values, m)


def u_semiclassical(H: HamiltonianModel, phase0: InitialPhaseData | None, t: float, axes,
                    hbar: float = 1.0, tol: Tolerances = DEFAULT_TOL, threads: int = 1,
                    manifold="auto", resolution: int = 48, meta: dict | None = None) -> SymbolGrid:
    """Semiclassical propagator symbol on a grid (``phase0=None`` means ``U(0) = 1``)."""
    phase0 = phase0 or zero_phase_data(H.n)
    return _grid_field(ProblemKind.SCHRODINGER, H, phase0, t, axes, hbar, tol, threads, manifold,
                       resolution, False, meta)


def rho_semiclassical(H: HamiltonianModel, phase0: InitialPhaseData, t: float, axes,
                      hbar: float = 1.0, tol: Tolerances = DEFAULT_TOL, threads: int = 1,
                      manifold="auto", resolution: int = 48, cos_mode: bool = False,
                      meta: dict | None = None) -> SymbolGrid:
    """Semiclassical Heisenberg-evolved symbol on a grid.

    ``cos_mode`` treats the initial data as ``alpha0 cos(S0 / hbar)``; each
    sheet then contributes ``alpha cos(S / hbar) exp(-i pi m / 2)``.
    """
    return _grid_field(ProblemKind.HEISENBERG, H, phase0, t, axes, hbar, tol, threads, manifold,
                       resolution, cos_mode, meta)


# ---------------------------------------------------------------------------
# quadratic closed forms
# ---------------------------------------------------------------------------

def _cayley_maslov(P, s: float, t: float, d: int, tol: Tolerances) -> tuple[int, float]:
    """Crossings of ``det(K(tau) + I) = 0`` on ``(s, t)`` counted with nullity.

    Returns the index and ``|det(K(t) + I) / 2^d|``.
    """
    eye = np.eye(d)

    def smin(tau):
        return np.linalg.svd(0.5 * (P.at(tau)[0] + eye), compute_uv=False)[-1]

    k = max(129, int(64 * abs(t - s)) + 1)
    taus = np.linspace(s, t, k)
    vals = np.array([smin(tau) for tau in taus])
    m = 0
    for i in range(1, k - 1):
        if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]:
            lo, hi = sorted((taus[i - 1], taus[i + 1]))
            r = minimize_scalar(smin, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
            sv = np.linalg.svd(0.5 * (P.at(r.x)[0] + eye), compute_uv=False)
            if sv[-1] < tol.caustic:
                m += int(np.sum(sv < np.sqrt(tol.caustic)))
    det = abs(np.linalg.det(0.5 * (P.at(t)[0] + eye)))
    return m, det


def quadratic_u_points(H: HamiltonianModel, s: float, t: float, X, tol: Tolerances = DEFAULT_TOL):
    """Closed-form ``(phase, amplitude, maslov)`` of ``U(t, s, x)`` for quadratic ``H``.

    ``Phi = x.J C x + 2 [J (K + I)^{-1} b].x + C0`` with the Cayley matrix
    ``C = (K - I)(K + I)^{-1}`` and ``C0 = -int_s^t H(tau, (K + I)^{-1} b) dtau``;
    amplitude ``2^n |det(K + I)|^{-1/2}``.

    Raises
    ------
    CausticError
        If ``det(K + I)`` vanishes at ``t``.
    """
    if not H.is_quadratic:
        raise ScenarioError("closed forms need a quadratic Hamiltonian")
    X = np.asarray(X, dtype=float)
    d = H.dim
    eye = np.eye(d)
    P = quadratic_propagate(H, s, t, tol)
    if t == s:
        return np.zeros(X.shape[:-1]), np.ones(X.shape[:-1]), 0
    m, det_half = _cayley_maslov(P, s, t, d, tol)
    if det_half < tol.caustic:
        raise CausticError(f"t = {t} is a caustic time: |det((K + I)/2)| = {det_half:.2e}")
    K, b = P.K, P.b
    KpI_inv = np.linalg.inv(K + eye)
    C = (K - eye) @ KpI_inv
    JC = apply_J(C.T).T
    lin = 2.0 * apply_J(KpI_inv @ b)

    def centre_energy(tau):
        Kt, bt = P.at(tau)
        c = np.linalg.solve(Kt + eye, bt)
        return float(H.value(tau, c))

    C0 = -quad(centre_energy, s, t, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    phase = np.einsum("...i,ij,...j->...", X, JC, X) + X @ lin + C0
    amp = np.full(X.shape[:-1], 2.0 ** H.n * abs(np.linalg.det(K + eye)) ** -0.5)
    return phase, amp, m


def quadratic_exact_u(H: HamiltonianModel, s: float, t: float, axes, hbar: float = 1.0,
                      tol: Tolerances = DEFAULT_TOL, meta: dict | None = None) -> SymbolGrid:
    """Closed-form propagator symbol on a grid; caustic times give an all-caustic grid."""
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    X = grid_points(axes)
    shape = tuple(len(a) for a in axes)
    try:
        phase, amp, m = quadratic_u_points(H, s, t, X, tol)
    except CausticError:
        status = np.full(shape, STATUS_CODES["caustic"], dtype=np.int8)
        return SymbolGrid(axes, np.zeros(shape, complex), float(t), float(hbar), "quadratic_exact_u",
                          status, [[] for _ in range(X.shape[0])], dict(meta or {}))
    sheets = [[WkbSheetValue(float(ph), float(a), int(m), 1)] for ph, a in zip(phase, amp)]
    values = (amp * np.exp(1j * phase / hbar - 0.5j * np.pi * m)).reshape(shape)
    return SymbolGrid(axes, values, float(t), float(hbar), "quadratic_exact_u",
                      np.zeros(shape, np.int8), sheets, dict(meta or {}))


def quadratic_rho_points(H: HamiltonianModel, phase0: InitialPhaseData, s: float, t: float, X,
                         tol: Tolerances = DEFAULT_TOL):
    """Closed-form ``(phase, amplitude)``: ``x0 = K^{-1}(x - b)``, ``rho = alpha0(x0) e^{i S0(x0)/hbar}``."""
    if not H.is_quadratic:
        raise ScenarioError("closed forms need a quadratic Hamiltonian")
    P = quadratic_propagate(H, s, t, tol)
    x0 = P.inverse(np.asarray(X, dtype=float))
    return phase0.phase(x0), phase0.amplitude(x0)


def quadratic_exact_rho(H: HamiltonianModel, phase0: InitialPhaseData, s: float, t: float, axes,
                        hbar: float = 1.0, tol: Tolerances = DEFAULT_TOL,
                        meta: dict | None = None) -> SymbolGrid:
    """Exact Heisenberg-evolved symbol of a quadratic Hamiltonian on a grid."""
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    X = grid_points(axes)
    shape = tuple(len(a) for a in axes)
    phase, amp = quadratic_rho_points(H, phase0, s, t, X, tol)
    sheets = [[WkbSheetValue(float(ph), float(a), 0, 1)] for ph, a in zip(phase, amp)]
    values = (amp * np.exp(1j * phase / hbar)).reshape(shape)
    return SymbolGrid(axes, values, float(t), float(hbar), "quadratic_exact_rho",
                      np.zeros(shape, np.int8), sheets, dict(meta or {}))


# ---------------------------------------------------------------------------
# Hamilton-Jacobi residuals
# ---------------------------------------------------------------------------

def single_sheet_phase(H: HamiltonianModel, kind, phase0: InitialPhaseData,
                       tol: Tolerances = DEFAULT_TOL, manifold="auto"):
    """Callable ``(t, X) -> phase`` using the unique root (``nan`` elsewhere)."""
    kind = ProblemKind.parse(kind)

    def fn(t, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if t == 0.0:
            return phase0.phase(X)
        ev = evaluate_points(H, kind, phase0, t, X, tol, manifold=manifold, cross_check=0)
        out = np.full(len(X), np.nan)
        for i, vals in enumerate(ev.values):
            if len(vals) == 1:
                out[i] = vals[0].phase
        return out

    return fn


def hj_residual_points(H: HamiltonianModel, kind, phase_fn, t: float, X, h: float,
                       dt: float | None = None) -> np.ndarray:
    """Central-difference H-J residual at points ``X`` with spacing ``h`` (and ``dt``).

    Schrodinger: ``d_t Phi + H(x - 1/2 J grad Phi)``.
    Heisenberg: ``d_t S + H(x - 1/2 J grad S) - H(x + 1/2 J grad S)``.
    """
    kind = ProblemKind.parse(kind)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    dt = h if dt is None else dt
    d = X.shape[1]
    ph_t = (phase_fn(t + dt, X) - phase_fn(t - dt, X)) / (2 * dt)
    eye = np.eye(d) * h
    stacked = np.concatenate([X + e for e in eye] + [X - e for e in eye])
    vals = phase_fn(t, stacked).reshape(2, d, len(X))
    grad = ((vals[0] - vals[1]) / (2 * h)).T
    half = 0.5 * apply_J(grad)
    res = ph_t + H.value(t, X - half)
    if kind is ProblemKind.HEISENBERG:
        res = res - H.value(t, X + half)
    return res


def hj_residual(fields, H: HamiltonianModel, kind) -> np.ndarray:
    """H-J residual from three grids at ``t - dt``, ``t``, ``t + dt``.

    Only points carrying exactly one sheet in all three grids and whose
    stencil neighbours do too are evaluated; the rest are ``nan``.
    """
    kind = ProblemKind.parse(kind)
    prev, cur, nxt = fields
    dt = 0.5 * (nxt.t - prev.t)
    shape = cur.shape

    def phases(g):
        out = np.full(len(g.sheets), np.nan)
        for i, v in enumerate(g.sheets):
            if len(v) == 1:
                out[i] = v[0].phase
        return out.reshape(shape)

    P0, P1, P2 = phases(prev), phases(cur), phases(nxt)
    grads = np.gradient(P1, *cur.axes)
    grad = np.stack(grads if isinstance(grads, list) else [grads], axis=-1)
    X = cur.points.reshape(shape + (len(cur.axes),))
    half = 0.5 * apply_J(grad)
    res = (P2 - P0) / (2 * dt) + H.value(cur.t, X - np.nan_to_num(half))
    if kind is ProblemKind.HEISENBERG:
        res = res - H.value(cur.t, X + np.nan_to_num(half))
    bad = ~np.isfinite(P0) | ~np.isfinite(P2) | ~np.all(np.isfinite(grad), axis=-1)
    for ax in range(len(shape)):
        bad = bad | ~np.isfinite(np.roll(P1, 1, ax)) | ~np.isfinite(np.roll(P1, -1, ax))
    edge = np.zeros(shape, dtype=bool)
    for ax in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[ax] = [0, -1]
        edge[tuple(sl)] = True
    res = np.where(bad | edge, np.nan, res)
    return res


# ---------------------------------------------------------------------------
# caustic times
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CausticEvent:
    """A time where ``grad M_t`` turns singular on the sampled initial points.

    ``sigma_min`` is the smallest singular value there and ``det`` the
    matching ``|det grad M_t|`` (both minimised over the samples).
    """

    t: float
    sigma_min: float
    det: float
    iterations: int


def _sigma_min(H, kind, phase0, X0, tau, tol):
    if tau == 0.0:
        return 1.0, 1.0
    G = midpoint_jacobian(H, kind, phase0, X0, tau, tol)
    sv = np.linalg.svd(G, compute_uv=False)
    return float(sv[:, -1].min()), float(np.abs(np.linalg.det(G)).min())


def caustic_times(H: HamiltonianModel, kind, phase0: InitialPhaseData, t_lo: float, t_hi: float, X0,
                  tol: Tolerances = DEFAULT_TOL, n_scan: int = 64, xtol: float = 1e-10,
                  step: float = 1e-7) -> list:
    """Locate caustic times in ``[t_lo, t_hi]`` by scan plus bisection.

    The smallest singular value of ``grad M_tau`` over the initial samples
    ``X0`` is scanned on ``n_scan`` points.  Every interior local minimum is
    refined by bisecting on the sign of its centred difference quotient
    (spacing ``step``) until the bracket is shorter than ``xtol``.  Minima
    whose determinant falls below ``tol.caustic`` are reported.

    Returns
    -------
    list of CausticEvent
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    taus = np.linspace(t_lo, t_hi, n_scan)
    vals = np.array([_sigma_min(H, kind, phase0, X0, tau, tol)[0] for tau in taus])
    events = []
    for i in range(1, n_scan - 1):
        if not (vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]):
            continue
        lo, hi = taus[i - 1], taus[i + 1]
        it = 0
        while hi - lo > xtol and it < 200:
            mid = 0.5 * (lo + hi)
            slope = (_sigma_min(H, kind, phase0, X0, mid + step, tol)[0]
                     - _sigma_min(H, kind, phase0, X0, mid - step, tol)[0])
            if slope > 0:
                hi = mid
            else:
                lo = mid
            it += 1
        tc = 0.5 * (lo + hi)
        smin, det = _sigma_min(H, kind, phase0, X0, tc, tol)
        if det < tol.caustic:
            events.append(CausticEvent(float(tc), smin, det, it))
    return events


# ---------------------------------------------------------------------------
# consistency checks
# ---------------------------------------------------------------------------

def poincare_cartan_defect(H: HamiltonianModel, x1, x2, t: float,
                           tol: Tolerances = DEFAULT_TOL, order: int = 32) -> np.ndarray:
    """Defect of the loop identity for initial chords ``x1 -> x2``.

    The loop ``C(x1, x2) + T+(x2) - g_t(C(x1, x2)) - T+(x1)`` encloses
    ``int_0^t [H(g(tau | x2)) - H(g(tau | x1))] dtau``; the difference is
    returned.
    """
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    m = len(x1)
    fb = flow_batch(H, np.concatenate([x1, x2]), t, jacobian=False, tol=tol)
    a1, a2 = fb.action[:m], fb.action[m:]
    h1, h2 = fb.ham_integral[:m], fb.ham_integral[m:]
    flowed, _, _ = flowed_chord_action(H, x1, x2, t, tol=tol, order=order)
    loop = chord_action(x1, x2) + a2 - flowed - a1
    return loop - (h2 - h1)


@dataclass(frozen=True)
class AdditivityReport:
    """Defects of the loop-additivity identities at one ``(t1, t2, x)``.

    ``defects`` maps identity names to signed defects.  ``conclusive`` is
    false when no consistent intermediate root was found.
    """

    defects: dict = field(default_factory=dict)
    conclusive: bool = True
    notes: tuple = ()

    @property
    def worst(self) -> float:
        return max((abs(v) for v in self.defects.values()), default=0.0)


def _root_at(H, kind, phase0, x, t, tol):
    try:
        return solve_short_time(H, kind, phase0, x, t, tol)
    except Exception:
        cls = solve_points(H, kind, phase0, np.atleast_2d(x), t, tol=tol, maslov=False)[0]
        return cls.sheets[0] if len(cls.sheets) == 1 else None


def _arc(H, x, t1, t2, tol):
    fb = flow_batch(H, np.atleast_2d(x), t1 + t2, t0=t1, jacobian=False, tol=tol)
    return fb.end[0], float(fb.action[0]), float(fb.ham_integral[0])


def additivity_check(H: HamiltonianModel, phase0: InitialPhaseData, kind, t1: float, t2: float, x,
                     tol: Tolerances = DEFAULT_TOL) -> AdditivityReport:
    """Loop additivity under ``t1 + t2`` splitting at the target ``x``.

    Schrodinger: the three-sided loop phase is additive, and for zero
    initial phase the two-sided loops add up to the full one plus the
    triangle ``P3(x, x2, x1)`` with ``x1``, ``x2`` the midpoints of the
    partial chords.  Heisenberg: the four-sided loop is additive, and it
    splits as ``X_l - X_r`` plus the quadrilateral of its four midpoints.
    """
    kind = ProblemKind.parse(kind)
    x = np.asarray(x, dtype=float)
    if H.time_dependent:
        raise ScenarioError("additivity_check assumes a time-independent Hamiltonian")
    full = _root_at(H, kind, phase0, x, t1 + t2, tol)
    if full is None:
        return AdditivityReport({}, False, ("no unique root at t1 + t2",))
    defects: dict = {}
    notes: list = []
    l0, r0 = full.l0, full.r0
    l1, a_l1, h_l1 = _arc(H, l0, 0.0, t1, tol)
    if kind is ProblemKind.SCHRODINGER:
        phi12 = loop_area(build_loop(full, "L~"))
        x1 = 0.5 * (l1 + r0)
        part = _root_at(H, kind, phase0, x1, t1, tol)
        if part is None or np.max(np.abs(part.x0 - full.x0)) > 1e-6:
            return AdditivityReport({}, False, ("intermediate root does not continue the sheet",))
        phi1 = loop_area(build_loop(part, "L~"))
        l2, a_12, _ = _arc(H, l1, t1, t2, tol)
        phi2 = a_12 + chord_action(l2, r0) + chord_action(r0, l1)
        defects["schrodinger_loop"] = phi12 - phi1 - phi2
        defects["endpoint"] = float(np.max(np.abs(l2 - full.lt)))
        if phase0.zero_phase:
            l2_full = full.lt
            xm = 0.5 * (l0 + l2_full)
            xa = 0.5 * (l0 + l1)
            xb = 0.5 * (l1 + l2_full)
            X12 = full.left.action + chord_action(l2_full, l0)
            X1 = a_l1 + chord_action(l1, l0)
            X2 = a_12 + chord_action(l2, l1)
            defects["one_sided_split"] = X12 - X1 - X2 - polygon_phase([xm, xb, xa])
    else:
        r1, a_r1, _ = _arc(H, r0, 0.0, t1, tol)
        A12 = loop_area(build_loop(full, "W"))
        x1 = 0.5 * (l1 + r1)
        part = _root_at(H, kind, phase0, x1, t1, tol)
        if part is None or np.max(np.abs(part.x0 - full.x0)) > 1e-6:
            return AdditivityReport({}, False, ("intermediate root does not continue the sheet",))
        A1 = loop_area(build_loop(part, "W"))
        l2, a_l12, _ = _arc(H, l1, t1, t2, tol)
        r2, a_r12, _ = _arc(H, r1, t1, t2, tol)
        A2 = chord_action(r1, l1) + a_l12 + chord_action(l2, r2) - a_r12
        defects["heisenberg_loop"] = A12 - A1 - A2
        lt, rt = full.lt, full.rt
        Xl = full.left.action + chord_action(lt, l0)
        Xr = full.right.action + chord_action(rt, r0)
        mids = [0.5 * (r0 + l0), 0.5 * (l0 + lt), 0.5 * (lt + rt), 0.5 * (rt + r0)]
        defects["two_sided_split"] = A12 - (Xl - Xr) - polygon_phase(mids[::-1])
    return AdditivityReport(defects, True, tuple(notes))


def covariance_check(H: HamiltonianModel, phase0: InitialPhaseData, kind, A: AffineMap, t: float,
                     X, hbar: float = 1.0, tol: Tolerances = DEFAULT_TOL) -> dict:
    """Compare the field of ``(H o A^{-1}, data o A^{-1})`` at ``X`` with the original at ``A^{-1}(X)``.

    Returns the largest deviations of the complex field, of the sheet phases
    and of the amplitudes.
    """
    kind = ProblemKind.parse(kind)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    HV = compose_affine(H, A)
    dV = phase0.compose_affine(A)
    ev_v = evaluate_points(HV, kind, dV, t, X, tol, cross_check=0)
    ev_o = evaluate_points(H, kind, phase0, t, A.inverse_apply(X), tol, cross_check=0)
    fv, fo = ev_v.field(hbar), ev_o.field(hbar)
    dph, damp = 0.0, 0.0
    for a, b in zip(ev_v.values, ev_o.values):
        if len(a) == len(b) == 1:
            dph = max(dph, abs(a[0].phase - b[0].phase))
            damp = max(damp, abs(a[0].amplitude - b[0].amplitude))
    return {"field": float(np.max(np.abs(fv - fo))) if len(fv) else 0.0,
            "phase": dph, "amplitude": damp,
            "status_mismatch": int(np.sum(ev_v.status != ev_o.status))}
