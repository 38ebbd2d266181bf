"""Two-point boundary problem for the midpoint map.

Given a target ``(t, x)``, find every initial manifold point ``x'`` with
``M_t(x') = x``, where

* Schrodinger: ``M_t(x') = 1/2 [g(t | l') + r']``,
* Heisenberg:  ``M_t(x') = 1/2 [g(t | l') + g(t | r')]``,

and ``l', r' = x' -/+ 1/2 J grad beta0(x')``.

Two solvers are provided.  :func:`solve_short_time` iterates the contraction
``x' <- x + x' - M_t(x')``, which converges on the short-time horizon.
:func:`solve_points` (and its single-point wrapper :func:`solve_sheets`)
seeds a batched damped Newton iteration from bracketing cells of a sampled
manifold plus a few analytic guesses, deduplicates the roots and classifies
each target as non-focal, caustic or forbidden.  Completeness of the root set
is limited by the manifold resolution.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .classical_flow import _integrate, flow_batch, quadratic_propagate
from .config import CHUNK, DEFAULT_TOL, Tolerances
from .errors import CausticError, ContractionError, DimensionError, ScenarioError
from .hamiltonian_model import HamiltonianModel, InitialPhaseData
from .phase_geometry import apply_J
from .sps_dynamics import (
    LagrangianManifold,
    ProblemKind,
    midpoint_jacobian_from_flows,
    sps_flow,
)

__all__ = [
    "ArcData",
    "BcSheet",
    "PointStatus",
    "PointClassification",
    "midpoint_map",
    "midpoint_jacobian",
    "amplitude_bracket",
    "constraint_involution_defect",
    "solve_short_time",
    "solve_sheets",
    "solve_points",
    "maslov_index",
    "maslov_indices",
    "sheet_labels",
]


class ArcData(NamedTuple):
    """Endpoints and accumulated integrals of one trajectory arc."""

    start: np.ndarray
    end: np.ndarray
    action: float
    ham_integral: float


@dataclass(frozen=True, eq=False)
class BcSheet:
    """One root of the boundary problem at ``(t, x)``."""

    sheet_id: int
    x: np.ndarray
    t: float
    x0: np.ndarray
    l0: np.ndarray
    r0: np.ndarray
    lt: np.ndarray
    rt: np.ndarray
    detM: float
    maslov: int
    kind: ProblemKind
    left: ArcData = field(repr=False)
    right: ArcData | None = field(default=None, repr=False)
    residual: float = 0.0
    maslov_status: str = "ok"

    def as_dict(self) -> dict:
        return {
            "sheet_id": int(self.sheet_id),
            "x0": self.x0.tolist(),
            "l0": self.l0.tolist(),
            "r0": self.r0.tolist(),
            "lt": self.lt.tolist(),
            "rt": self.rt.tolist(),
            "detM": float(self.detM),
            "maslov": int(self.maslov),
            "maslov_status": self.maslov_status,
            "residual": float(self.residual),
        }


class PointStatus(str, enum.Enum):
    NONFOCAL = "nonfocal"
    CAUSTIC = "caustic"
    FORBIDDEN = "forbidden"


@dataclass(frozen=True, eq=False)
class PointClassification:
    """Outcome of the boundary solve at one target point."""

    x: np.ndarray
    t: float
    status: PointStatus
    sheets: tuple = ()
    diagnostics: tuple = ()


# ---------------------------------------------------------------------------
# midpoint map
# ---------------------------------------------------------------------------

def _as_batch(H, X):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != H.dim:
        raise DimensionError(f"points must have last axis {H.dim}, got {X.shape}")
    return X.reshape(-1, H.dim), X.shape


def _evaluate(H, kind, phase0, Xp, t, tol, jac=True, actions=False, threads=1):
    """Midpoint map data for a batch ``Xp`` of shape ``(m, 2n)``."""
    kind = ProblemKind.parse(kind)
    m = Xp.shape[0]
    y = phase0.phase_grad(Xp)
    half = 0.5 * apply_J(y)
    lp, rp = Xp - half, Xp + half
    pts = lp if kind is ProblemKind.SCHRODINGER else np.concatenate([lp, rp])
    out = {"l0": lp, "r0": rp}
    if actions or not H.is_quadratic:
        fb = flow_batch(H, pts, t, jacobian=jac, tol=tol, threads=threads)
        ends, G = fb.end, fb.jacobi
        out["action"], out["ham"] = fb.action, fb.ham_integral
    else:
        P = quadratic_propagate(H, 0.0, t, tol)
        ends = P.apply(pts)
        G = np.broadcast_to(P.K, pts.shape + (H.dim,)) if jac else None
    out["lt"] = ends[:m]
    out["rt"] = rp.copy() if kind is ProblemKind.SCHRODINGER else ends[m:]
    out["M"] = 0.5 * (out["lt"] + out["rt"])
    if jac:
        Gl = G[:m]
        Gr = None if kind is ProblemKind.SCHRODINGER else G[m:]
        gm = midpoint_jacobian_from_flows(kind, Gl, Gr, phase0.phase_hess(Xp))
        out["gradM"] = gm
        out["detM"] = np.linalg.det(gm)
    return out


def midpoint_map(H: HamiltonianModel, kind, phase0: InitialPhaseData, xp, t: float,
                 tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``M_t(x')`` for points of shape ``(..., 2n)``."""
    X, shape = _as_batch(H, xp)
    return _evaluate(H, kind, phase0, X, t, tol, jac=False)["M"].reshape(shape)


def midpoint_jacobian(H: HamiltonianModel, kind, phase0: InitialPhaseData, xp, t: float,
                      tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """``grad M_t(x')`` for points of shape ``(..., 2n)``."""
    X, shape = _as_batch(H, xp)
    return _evaluate(H, kind, phase0, X, t, tol)["gradM"].reshape(shape + (H.dim,))


def amplitude_bracket(H: HamiltonianModel, kind, phase0: InitialPhaseData, xp, t: float,
                      h: float = 1e-4, tol: Tolerances | None = None) -> float:
    """``det {x(t), eta}_2`` at ``(x', grad beta0(x'))`` by central differences.

    With ``eta = y - grad beta0(x)`` the bracket matrix is
    ``dx(t)/dx + dx(t)/dy . beta0''``; the derivatives are taken on the
    extended flow built by :func:`mwkb.sps_dynamics.sps_flow`.
    """
    tol = tol or DEFAULT_TOL.with_(rtol=1e-13, atol=1e-14)
    xp = np.asarray(xp, dtype=float)
    d = xp.shape[0]
    y = phase0.phase_grad(xp)
    B = phase0.phase_hess(xp)
    eye = np.eye(2 * d)
    Z = np.concatenate([xp, y])
    probes = np.concatenate([Z + h * eye, Z - h * eye])
    st = sps_flow(H, kind, probes[:, :d], probes[:, d:], t, tol)
    D = (st.x[:2 * d] - st.x[2 * d:]).T / (2 * h)
    Dx, Dy = D[:, :d], D[:, d:]
    return float(np.linalg.det(Dx + Dy @ B))


def constraint_involution_defect(phase0: InitialPhaseData, X, h: float = 1e-5) -> float:
    """Largest ``|{eta_a, eta_b}_2|`` for ``eta = y - grad beta0(x)`` (finite differences)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    worst = 0.0
    for x in X:
        dx = np.empty((d, d))
        for k in range(d):
            e = np.zeros(d)
            e[k] = h
            dx[:, k] = -(phase0.phase_grad(x + e) - phase0.phase_grad(x - e)) / (2 * h)
        dy = np.eye(d)
        br = dx @ dy.T - dy @ dx.T
        worst = max(worst, float(np.max(np.abs(br))))
    return worst


# ---------------------------------------------------------------------------
# short-time contraction
# ---------------------------------------------------------------------------

def solve_short_time(H: HamiltonianModel, kind, phase0: InitialPhaseData, x, t: float,
                     tol: Tolerances = DEFAULT_TOL, threads: int = 1, raise_on_failure: bool = True):
    """Fixed-point solve of ``M_t(x') = x`` started at ``x' = x``.

    Accepts a single point (returns a :class:`BcSheet`) or a batch of shape
    ``(m, 2n)`` (returns a list with ``None`` for unconverged points when
    ``raise_on_failure`` is false).

    Raises
    ------
    ContractionError
        If some point does not converge within ``tol.max_iter`` iterations.
    """
    kind = ProblemKind.parse(kind)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X, _ = _as_batch(H, x)
    S = X.copy()
    done = np.zeros(len(X), dtype=bool)
    for _ in range(tol.max_iter):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        M = _evaluate(H, kind, phase0, S[act], t, tol, jac=False, threads=threads)["M"]
        step = X[act] - M
        if not np.all(np.isfinite(step)):
            bad = act[~np.all(np.isfinite(step), axis=1)]
            step[~np.isfinite(step)] = 0.0
            done[bad] = True
            S[bad] = np.nan
        S[act] += step
        small = np.max(np.abs(step), axis=1) < tol.bc
        done[act[small]] = True
    failed = ~done | ~np.all(np.isfinite(S), axis=1)
    if failed.any() and raise_on_failure:
        raise ContractionError(
            f"fixed-point iteration did not converge for {int(failed.sum())} point(s) within "
            f"{tol.max_iter} iterations; use solve_sheets for long times")
    ok = np.flatnonzero(~failed)
    sheets: list = [None] * len(X)
    if ok.size:
        built = _build_sheets(H, kind, phase0, X[ok], S[ok], t, tol, threads,
                              maslov=np.zeros(ok.size, dtype=int), status=["ok"] * ok.size)
        for i, sh in zip(ok, built):
            sheets[i] = sh
    return sheets[0] if single else sheets


def _build_sheets(H, kind, phase0, X, S, t, tol, threads, maslov, status, labels=None):
    ev = _evaluate(H, kind, phase0, S, t, tol, jac=True, actions=True, threads=threads)
    m = len(S)
    out = []
    for i in range(m):
        left = ArcData(ev["l0"][i], ev["lt"][i], float(ev["action"][i]), float(ev["ham"][i]))
        right = None
        if kind is ProblemKind.HEISENBERG:
            right = ArcData(ev["r0"][i], ev["rt"][i], float(ev["action"][m + i]), float(ev["ham"][m + i]))
        res = float(np.max(np.abs(ev["M"][i] - X[i])))
        out.append(BcSheet(0 if labels is None else int(labels[i]), X[i].copy(), float(t), S[i].copy(),
                           ev["l0"][i], ev["r0"][i], ev["lt"][i], ev["rt"][i], float(ev["detM"][i]),
                           int(maslov[i]), kind, left, right, res, status[i]))
    return out


# ---------------------------------------------------------------------------
# Newton with seeding
# ---------------------------------------------------------------------------

def _bracketing_seeds(M: LagrangianManifold, X: np.ndarray, max_seeds: int = 12):
    """Cell-centre seeds for each target: cells whose corner images bracket the target."""
    d = M.base.shape[1]
    shape = M.shape
    img = M.xt.reshape(tuple(shape) + (d,))
    base = M.base.reshape(tuple(shape) + (d,))
    corners_lo = img[(slice(0, -1),) * d]
    corners_hi = corners_lo
    centre = np.zeros_like(base[(slice(0, -1),) * d])
    count = 0
    for offs in np.ndindex(*(2,) * d):
        sl = tuple(slice(o, (s - 1 + o)) for o, s in zip(offs, shape))
        c = img[sl]
        corners_lo = np.minimum(corners_lo, c)
        corners_hi = np.maximum(corners_hi, c)
        centre = centre + base[sl]
        count += 1
    centre = (centre / count).reshape(-1, d)
    lo = corners_lo.reshape(-1, d)
    hi = corners_hi.reshape(-1, d)
    mid = 0.5 * (lo + hi)
    seeds, owners = [], []
    block = max(1, 4_000_000 // max(1, lo.shape[0] * d))
    for s in range(0, len(X), block):
        xs = X[s:s + block]
        inside = np.all((lo[None] <= xs[:, None]) & (xs[:, None] <= hi[None]), axis=-1)
        for j in range(len(xs)):
            cells = np.flatnonzero(inside[j])
            if cells.size > max_seeds:
                dist = np.max(np.abs(mid[cells] - xs[j]), axis=1)
                cells = cells[np.argsort(dist, kind="stable")[:max_seeds]]
            seeds.append(centre[cells])
            owners.append(np.full(cells.size, s + j))
    if not seeds:
        return np.zeros((0, d)), np.zeros(0, dtype=int)
    return np.concatenate(seeds), np.concatenate(owners)


def _newton(H, kind, phase0, targets, S, t, tol, threads, bound):
    """Batched damped Newton on ``M_t(x') - target``.

    Returns ``(roots, converged, stalled_det)`` where ``stalled_det`` holds
    ``|det grad M|`` at the last iterate of unconverged candidates (``nan``
    for candidates that escaped or broke down).
    """
    K = len(S)
    S = S.copy()
    conv = np.zeros(K, dtype=bool)
    alive = np.ones(K, dtype=bool)
    last_det = np.full(K, np.nan)
    if K == 0:
        return S, conv, last_det
    ev = _evaluate(H, kind, phase0, S, t, tol, threads=threads)
    F = ev["M"] - targets
    G = ev["gradM"]
    res = np.max(np.abs(F), axis=1)
    last_det[:] = np.abs(ev["detM"])
    fine = 1e-2 * tol.bc
    best = res.copy()
    since = np.zeros(K, dtype=int)
    for _ in range(tol.max_iter):
        conv |= alive & (res < fine)
        # give up on candidates that have not halved their residual for a while
        improved = res < 0.5 * best
        best = np.where(improved, res, best)
        since = np.where(improved, 0, since + 1)
        stale = alive & ~conv & (since > 12)
        conv[stale] = res[stale] < tol.bc
        alive[stale & ~conv] = False
        act = np.flatnonzero(alive & ~conv)
        if act.size == 0:
            break
        try:
            step = -np.linalg.solve(G[act], F[act][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.empty((act.size, S.shape[1]))
            for k, i in enumerate(act):
                step[k] = -np.linalg.lstsq(G[i], F[i], rcond=None)[0]
        lam = np.ones(act.size)
        pending = np.arange(act.size)
        accepted = np.zeros(act.size, dtype=bool)
        for _half in range(8):
            idx = act[pending]
            trial = S[idx] + lam[pending, None] * step[pending]
            finite = np.all(np.isfinite(trial), axis=1) & (np.max(np.abs(trial), axis=1) < bound)
            if not finite.any():
                break
            tev = _evaluate(H, kind, phase0, trial[finite], t, tol, threads=threads)
            tF = tev["M"] - targets[idx[finite]]
            tres = np.max(np.abs(tF), axis=1)
            sub = np.flatnonzero(finite)
            good = tres < res[idx[finite]] * (1 - 1e-4 * lam[pending[sub]]) + 1e-3 * fine
            gi = idx[finite][good]
            S[gi] = trial[finite][good]
            F[gi] = tF[good]
            G[gi] = tev["gradM"][good]
            res[gi] = tres[good]
            last_det[gi] = np.abs(tev["detM"][good])
            accepted[pending[sub[good]]] = True
            pending = pending[~accepted[pending]]
            if pending.size == 0:
                break
            lam[pending] *= 0.5
        # candidates whose line search failed are finished: converged if the
        # forward residual is already within tolerance, stalled otherwise.
        stuck = act[~accepted]
        conv[stuck] = res[stuck] < tol.bc
        alive[stuck[~conv[stuck]]] = False
    conv &= alive & (res < tol.bc)
    return S, conv, last_det


def _dedup(roots: np.ndarray, radius: float) -> np.ndarray:
    keep: list[int] = []
    for i in range(len(roots)):
        if all(np.max(np.abs(roots[i] - roots[k])) > radius * (1.0 + np.max(np.abs(roots[k])))
               for k in keep):
            keep.append(i)
    return np.asarray(keep, dtype=int)


def sheet_labels(M: LagrangianManifold) -> np.ndarray:
    """Connected components of ``sign det grad M`` on the base grid (labels from 1)."""
    sign = np.sign(M.detM).reshape(M.shape)
    pos, npos = ndimage.label(sign > 0)
    neg, _ = ndimage.label(sign < 0)
    lab = pos.copy()
    lab[neg > 0] = neg[neg > 0] + npos
    return lab


def solve_points(H: HamiltonianModel, kind, phase0: InitialPhaseData, X, t: float,
                 manifold: LagrangianManifold | None = None, tol: Tolerances = DEFAULT_TOL,
                 threads: int = 1, maslov: bool = True, bound: float | None = None) -> list:
    """Classify target points and return all boundary-problem roots.

    Parameters
    ----------
    X : array_like, shape (m, 2n)
    manifold : LagrangianManifold, optional
        Sampled initial manifold advanced to ``t``; its bracketing cells seed
        Newton.  Without it only analytic seeds are used: the target itself
        and, for the Heisenberg problem, its backward image ``g(-t | x)``.
    bound : float, optional
        Candidates leaving ``|x'| < bound`` are discarded.

    Returns
    -------
    list of PointClassification
    """
    kind = ProblemKind.parse(kind)
    X, _ = _as_batch(H, X)
    m, d = X.shape
    if manifold is not None and abs(manifold.t - t) > 1e-14:
        raise ScenarioError(f"manifold is at t={manifold.t}, expected t={t}")
    if bound is None:
        if H.is_quadratic:
            bound = 1e9
        else:
            span = 0.0 if manifold is None else float(np.max(np.abs(np.concatenate([manifold.lo, manifold.hi]))))
            bound = 4.0 * max(span, float(np.max(np.abs(X))) if m else 0.0, 1.0)
    # Zero initial phase on the Heisenberg side pins y' = 0, so l' = r' = x'
    # and the midpoint map is the flow itself: the backward image is the
    # only root and det grad M = 1 along the whole history.
    egorov = kind is ProblemKind.HEISENBERG and phase0.zero_phase and t != 0.0
    seeds = [] if egorov else [X]
    owners = [] if egorov else [np.arange(m)]
    if kind is ProblemKind.HEISENBERG and t != 0.0:
        back = flow_batch(H, X, -t, jacobian=False, tol=tol, threads=threads).end if not H.is_quadratic \
            else quadratic_propagate(H, 0.0, t, tol).inverse(X)
        seeds.append(back)
        owners.append(np.arange(m))
    if manifold is not None and t != 0.0 and not egorov:
        s, o = _bracketing_seeds(manifold, X)
        seeds.append(s)
        owners.append(o)
    S = np.concatenate(seeds)
    own = np.concatenate(owners)
    inside = phase0.in_support(S)
    S, own = S[inside], own[inside]
    if t == 0.0:
        roots, conv, stall = S.copy(), np.ones(len(S), dtype=bool), np.ones(len(S))
    else:
        roots, conv, stall = _newton(H, kind, phase0, X[own], S, t, tol, threads, bound)
    inside = phase0.in_support(roots) & conv
    diag: list[list[str]] = [[] for _ in range(m)]
    caustic_flag = np.zeros(m, dtype=bool)
    for i in np.flatnonzero(~conv):
        if np.isfinite(stall[i]) and stall[i] < tol.caustic:
            caustic_flag[own[i]] = True
    n_dropped = np.bincount(own[~conv], minlength=m)
    for j in np.flatnonzero(n_dropped):
        diag[j].append(f"{int(n_dropped[j])} Newton candidate(s) dropped without converging")

    chosen_roots, chosen_own = [], []
    for j in range(m):
        cand = roots[inside & (own == j)]
        if cand.size:
            keep = _dedup(cand, tol.dedup)
            chosen_roots.append(cand[keep])
            chosen_own.append(np.full(keep.size, j))
    if chosen_roots:
        R = np.concatenate(chosen_roots)
        O = np.concatenate(chosen_own)
    else:
        R, O = np.zeros((0, d)), np.zeros(0, dtype=int)

    if len(R):
        if maslov and t != 0.0 and not egorov:
            mas, mstat = maslov_indices(H, kind, phase0, R, t, tol, threads)
        else:
            mas, mstat = np.zeros(len(R), dtype=int), ["ok"] * len(R)
        labels = None
        if manifold is not None:
            lab = sheet_labels(manifold)
            idx = manifold.grid_index(R)
            labels = np.array([lab[tuple(i)] if i[0] >= 0 else 0 for i in idx])
        sheets = _build_sheets(H, kind, phase0, X[O], R, t, tol, threads, mas, list(mstat), labels)
    else:
        sheets = []

    per_point: list[list[BcSheet]] = [[] for _ in range(m)]
    for o, sh in zip(O, sheets):
        if sh.residual >= tol.bc:
            diag[o].append(f"root dropped: forward residual {sh.residual:.2e} >= {tol.bc:.1e}")
            continue
        per_point[o].append(sh)
    hull_lo = hull_hi = None
    if manifold is not None:
        hull_lo, hull_hi = manifold.xt.min(axis=0), manifold.xt.max(axis=0)
    out = []
    for j in range(m):
        sh = per_point[j]
        if any(abs(s.detM) < tol.caustic for s in sh) or caustic_flag[j]:
            status = PointStatus.CAUSTIC
        elif sh:
            status = PointStatus.NONFOCAL
        else:
            status = PointStatus.FORBIDDEN
            if hull_lo is not None and np.all((X[j] >= hull_lo) & (X[j] <= hull_hi)):
                diag[j].append("no root found although x lies inside the sampled image hull")
        out.append(PointClassification(X[j].copy(), float(t), status, tuple(sh), tuple(diag[j])))
    return out


def solve_sheets(M: LagrangianManifold, H: HamiltonianModel, x, t: float | None = None,
                 tol: Tolerances = DEFAULT_TOL, threads: int = 1) -> PointClassification:
    """Classify a single target using a manifold already advanced to ``t``."""
    t = M.t if t is None else t
    return solve_points(H, M.kind, M.phase0, np.atleast_2d(x), t, manifold=M, tol=tol, threads=threads)[0]


# ---------------------------------------------------------------------------
# Maslov index
# ---------------------------------------------------------------------------

def _jacobian_path(H, kind, phase0, R, t, taus, tol, threads):
    """``grad M_tau`` at fixed roots for every ``tau`` in ``taus``: shape ``(k, m, d, d)``."""
    m, d = R.shape
    y = phase0.phase_grad(R)
    half = 0.5 * apply_J(y)
    lp, rp = R - half, R + half
    B = phase0.phase_hess(R)
    if H.is_quadratic:
        P = quadratic_propagate(H, 0.0, t, tol)
        Ks = np.stack([P.at(tau)[0] for tau in taus])
        Gl = np.broadcast_to(Ks[:, None], (len(taus), m, d, d))
        Gr = Gl
    else:
        pts = lp if kind is ProblemKind.SCHRODINGER else np.concatenate([lp, rp])
        fb = flow_batch(H, pts, t, jacobian=True, tol=tol, t_eval=taus, threads=threads)
        Gl = fb.path_jacobi[:, :m]
        Gr = None if kind is ProblemKind.SCHRODINGER else fb.path_jacobi[:, m:]
    return midpoint_jacobian_from_flows(kind, Gl, Gr, B[None])


def _dense_jacobian_fn(H, kind, phase0, R, t, tol):
    """Callable ``tau (m,) -> grad M`` at per-root times."""
    m, d = R.shape
    y = phase0.phase_grad(R)
    half = 0.5 * apply_J(y)
    lp, rp = R - half, R + half
    B = phase0.phase_hess(R)
    if H.is_quadratic:
        P = quadratic_propagate(H, 0.0, t, tol)

        def fn(tau):
            # Roots share the linear flow, so each distinct time is evaluated once.
            uniq, inv = np.unique(np.asarray(tau, dtype=float), return_inverse=True)
            K = np.stack([P.at(float(s))[0] for s in uniq])[inv.ravel()]
            return midpoint_jacobian_from_flows(kind, K, K, B)
        return fn
    pts = lp if kind is ProblemKind.SCHRODINGER else np.concatenate([lp, rp])
    sol, width = _integrate(H, pts, 0.0, t, True, tol, dense=True)
    d2 = d * d

    def fn(tau):
        tau = np.asarray(tau, dtype=float)
        out_l = np.empty((m, d, d))
        out_r = np.empty((m, d, d))
        for s in range(0, m, 128):
            sl = slice(s, min(m, s + 128))
            Y = sol.sol(tau[sl]).reshape(-1, width, tau[sl].size)
            rows = np.arange(sl.start, sl.stop)
            cols = rows - sl.start
            out_l[sl] = Y[rows, d:d + d2, cols].reshape(-1, d, d)
            if kind is ProblemKind.HEISENBERG:
                out_r[sl] = Y[rows + m, d:d + d2, cols].reshape(-1, d, d)
        return midpoint_jacobian_from_flows(kind, out_l, None if kind is ProblemKind.SCHRODINGER else out_r, B)
    return fn


def _singular_values(G):
    """Descending singular values of stacked matrices; ``2 x 2`` stacks use the closed form."""
    G = np.asarray(G, dtype=float)
    if G.shape[-2:] != (2, 2):
        return np.linalg.svd(G, compute_uv=False)
    fro = np.sum(G * G, axis=(-2, -1))
    det = np.abs(G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0])
    smax = np.sqrt(0.5 * (fro + np.sqrt(np.maximum(fro * fro - 4 * det * det, 0.0))))
    smin = np.divide(det, smax, out=np.zeros_like(det), where=smax > 0)
    return np.stack([smax, smin], axis=-1)


def _golden_min(fn, a, b, iters=64):
    """Vectorised golden-section minimisation of ``fn`` on brackets ``[a, b]``."""
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - gr * (b - a)
    e = a + gr * (b - a)
    fc, fe = fn(c), fn(e)
    for _ in range(iters):
        left = fc < fe
        a, b = np.where(left, a, c), np.where(left, e, b)
        probe = np.where(left, b - gr * (b - a), a + gr * (b - a))
        fp = fn(probe)
        c, e, fc, fe = (np.where(left, probe, e), np.where(left, c, probe),
                        np.where(left, fp, fe), np.where(left, fc, fp))
    return 0.5 * (a + b)


def maslov_indices(H: HamiltonianModel, kind, phase0: InitialPhaseData, R, t: float,
                   tol: Tolerances = DEFAULT_TOL, threads: int = 1, samples: int | None = None):
    """Maslov indices of roots ``R`` (shape ``(m, 2n)``) by a ``tau``-scan of ``grad M_tau``.

    The smallest singular value of ``grad M_tau`` is sampled on ``[0, t]``.
    Local minima that could reach zero within one sample step are refined by
    golden-section search.  A refined minimum below ``tol.caustic`` is a
    crossing whose multiplicity is the number of singular values below
    ``sqrt(tol.caustic)``.  The sign of ``det grad M`` must change across a
    crossing exactly when that multiplicity is odd; otherwise the event is
    reported as ``"degenerate"`` (tangential zero) and not counted.

    Returns
    -------
    index : ndarray of int
    status : list of str
        ``"ok"``, ``"degenerate"`` or ``"caustic"`` (zero at ``tau = t``).
    """
    kind = ProblemKind.parse(kind)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    m = len(R)
    index = np.zeros(m, dtype=int)
    status = ["ok"] * m
    if t == 0.0 or m == 0:
        return index, status
    k = samples or max(65, int(48 * abs(t)) + 1)
    taus = np.linspace(0.0, t, k)
    out_idx, out_stat = [], []
    for s in range(0, m, CHUNK):
        Rc = R[s:s + CHUNK]
        gm = _jacobian_path(H, kind, phase0, Rc, t, taus, tol, threads)
        sv = _singular_values(gm)
        smin = sv[..., -1]
        scale = np.maximum(1.0, sv[..., 0])
        det = np.linalg.det(gm)
        cand_i, cand_j = [], []
        for i in range(1, k):
            prev = smin[i - 1]
            cur = smin[i]
            nxt = smin[i + 1] if i + 1 < k else np.full_like(cur, np.inf)
            slope = np.maximum(np.abs(cur - prev), np.abs(nxt - cur) if i + 1 < k else np.abs(cur - prev))
            is_min = (cur <= prev) & (cur <= nxt)
            near = cur < 2.0 * slope + tol.caustic * scale[i]
            js = np.flatnonzero(is_min & near)
            cand_i.extend([i] * js.size)
            cand_j.extend(js.tolist())
        idx_c = np.zeros(len(Rc), dtype=int)
        stat_c = ["ok"] * len(Rc)
        if cand_i:
            ci = np.asarray(cand_i)
            cj = np.asarray(cand_j)
            a = taus[ci - 1]
            b = taus[np.minimum(ci + 1, k - 1)]
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            fn_g = _dense_jacobian_fn(H, kind, phase0, Rc[cj], t, tol)

            def f(tau):
                return _singular_values(fn_g(tau))[..., -1]

            tstar = _golden_min(f, lo, hi)
            G = fn_g(tstar)
            svs = _singular_values(G)
            sc = np.maximum(1.0, svs[:, 0])
            zero = svs[:, -1] < tol.caustic * sc
            null = np.sum(svs < np.sqrt(tol.caustic) * sc[:, None], axis=1)
            da = det[ci - 1, cj]
            db = det[np.minimum(ci + 1, k - 1), cj]
            flip = np.sign(da) != np.sign(db)
            at_end = np.abs(tstar - t) < 1e-9 * max(1.0, abs(t))
            for q in range(len(ci)):
                j = cj[q]
                if not zero[q] or at_end[q]:
                    continue
                if bool(flip[q]) != bool(null[q] % 2):
                    stat_c[j] = "degenerate"
                    continue
                idx_c[j] += int(null[q])
        end_zero = smin[-1] < tol.caustic * scale[-1]
        for j in np.flatnonzero(end_zero):
            stat_c[j] = "caustic"
        out_idx.append(idx_c)
        out_stat.extend(stat_c)
    return np.concatenate(out_idx), out_stat


def maslov_index(H: HamiltonianModel, kind, phase0: InitialPhaseData, x0, t: float,
                 tol: Tolerances = DEFAULT_TOL) -> int:
    """Maslov index of a single root; see :func:`maslov_indices`.

    Raises
    ------
    CausticError
        If ``grad M_t`` is singular at the final time.
    """
    idx, stat = maslov_indices(H, kind, phase0, np.atleast_2d(x0), t, tol)
    if stat[0] == "caustic":
        raise CausticError(f"det grad M vanishes at tau = t = {t}; the index is undefined on the caustic")
    if stat[0] == "degenerate":
        warnings.warn("tangential zero of det grad M encountered; index reported without that event",
                      RuntimeWarning, stacklevel=2)
    return int(idx[0])
