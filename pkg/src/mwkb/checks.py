"""Named invariant and oracle checks runnable from a scenario.

Every check takes the built :class:`~mwkb.scenario.Scenario`, a parameter
dict from the scenario's ``outputs.checks`` list and a :class:`RunContext`,
and returns a :class:`CheckResult` whose ``metrics`` hold the measured
numbers.  Checks tied to an acceptance criterion carry its number; the run
summary aggregates pass/fail per criterion.

Parameters that are times may be given as numbers or as constant
expressions such as ``"pi/2"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .bc_solver import solve_short_time
from .classical_flow import flow_batch, quadratic_propagate
from .config import DEFAULT_TOL
from .errors import ContractionError, ScenarioError
from .expressions import parse_expression
from .phase_geometry import alternating_sum, loop_area, polygon_loop, polygon_phase, wedge
from .quantum_oracle import (
    SplitStepConfig,
    density_symbols,
    husimi_of_symbol,
    husimi_propagator,
)
from .sps_dynamics import ProblemKind
from .symbol_grid import STATUS_CODES, grid_points
from .weyl_calculus import WeylGrid, star_product, star_product3, stationary_phase_compose
from .wkb_evolution import (
    additivity_check,
    build_loop,
    caustic_times,
    evaluate_points,
    hj_residual_points,
    poincare_cartan_defect,
    quadratic_exact_rho,
    quadratic_exact_u,
    rho_semiclassical,
    single_sheet_phase,
    u_semiclassical,
)

__all__ = ["CheckResult", "RunContext", "CHECKS", "run_check", "number"]


@dataclass
class CheckResult:
    name: str
    criterion: int | None
    passed: bool
    metrics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"name": self.name, "criterion": self.criterion, "passed": bool(self.passed),
                "metrics": self.metrics, "notes": list(self.notes)}


@dataclass
class RunContext:
    """State shared by the checks of one run."""

    threads: int = 1
    forward_residuals: list = field(default_factory=list)

    @property
    def max_forward_residual(self) -> float:
        return float(max(self.forward_residuals, default=0.0))


def number(v) -> float:
    """A float from a number or a constant expression string."""
    if isinstance(v, str):
        expr = parse_expression(v, 1)
        if expr.free_symbols:
            raise ScenarioError(f"{v!r} is not a constant")
        return float(expr)
    return float(v)


def _numbers(vs) -> list:
    return [number(v) for v in vs]


def _rng(sc, params):
    return np.random.default_rng(int(params.get("seed", sc.seed)))


def _hamiltonian(sc, params):
    if "hamiltonian" not in params:
        return sc.H
    from .scenario import _build_hamiltonian

    return _build_hamiltonian(params["hamiltonian"])


def _oracle_window(W: WeylGrid, box, max_points: int):
    """Indices of Weyl symbol grid points inside ``box`` (about ``max_points`` per axis)."""
    idx = []
    for axis, (lo, hi) in zip((W.q, W.p), box):
        sel = np.flatnonzero((axis >= lo) & (axis <= hi))
        stride = max(1, len(sel) // max_points)
        idx.append(sel[::stride])
    return idx


def _oracle_cfg(H, W, settings):
    return SplitStepConfig.from_hamiltonian(H, W.kernel_q, W.hbar, settings["dt"])


def _oracle_method(H, settings):
    return "strang" if H.time_dependent else settings["method"]


def _initial_symbol(W: WeylGrid, phase0):
    def fn(X):
        return phase0.amplitude(X) * np.exp(1j * phase0.phase(X) / W.hbar)

    return W.symbol_grid(W.sample(fn))


def _weyl_grid(settings, hbar):
    lo, hi = settings["q_range"]
    return WeylGrid(lo, hi, int(settings["n_points"]), hbar, settings.get("n_p"))


# ---------------------------------------------------------------------------
# criterion 1
# ---------------------------------------------------------------------------

def check_quadratic_exact_rho(sc, params, ctx) -> CheckResult:
    """Semiclassical, closed-form and oracle density symbols agree pointwise."""
    H, phase0 = _hamiltonian(sc, params), sc.phase0
    tol = float(params.get("tol", 1e-6))
    times = _numbers(params.get("times", sc.times))
    hbars = _numbers(params.get("hbar", sc.hbars))
    box = params.get("box", sc.doc["grid"]["domain"])
    npts = int(params.get("points_per_axis", 24))
    settings = sc.oracle_settings()
    rows, worst = [], 0.0
    for hbar in hbars:
        W = _weyl_grid(settings, hbar)
        cfg = _oracle_cfg(H, W, settings)
        oracle = density_symbols(_initial_symbol(W, phase0), cfg, times, _oracle_method(H, settings))
        qi, pj = _oracle_window(W, box, npts)
        axes = (W.q[qi], W.p[pj])
        for t, ref in zip(times, oracle):
            rs = rho_semiclassical(H, phase0, t, axes, hbar, threads=ctx.threads)
            ex = quadratic_exact_rho(H, phase0, 0.0, t, axes, hbar)
            orv = ref.values[np.ix_(qi, pj)]
            mask = rs.mask("nonfocal")
            row = {"t": t, "hbar": hbar, "points": int(mask.sum()),
                   "sc_vs_exact": float(np.max(np.abs(rs.values - ex.values)[mask])),
                   "sc_vs_oracle": float(np.max(np.abs(rs.values - orv)[mask])),
                   "exact_vs_oracle": float(np.max(np.abs(ex.values - orv)[mask]))}
            rows.append(row)
            worst = max(worst, row["sc_vs_exact"], row["sc_vs_oracle"], row["exact_vs_oracle"])
    return CheckResult("quadratic_exact_rho", 1, worst < tol, {"rows": rows, "worst": worst, "tol": tol})


# ---------------------------------------------------------------------------
# criterion 2
# ---------------------------------------------------------------------------

def husimi_sign_test(H, times, X, axes, hbar=1.0, oracle_q=(-12.0, 12.0, 384), dt=1e-3, threads=1) -> list:
    """Coherent-state smoothing of the semiclassical propagator against the oracle.

    For each time returns the smallest ``Re(Q_sc conj(Q_oracle))`` over the
    points ``X`` (positive means the signs agree everywhere), the largest
    ``|Q_sc - Q_oracle|`` and the Maslov indices present on the grid.
    """
    lo, hi, n = oracle_q
    cfg = SplitStepConfig.from_hamiltonian(H, np.linspace(lo, hi, int(n)), hbar, dt)
    out = []
    for t in times:
        Qo = husimi_propagator(cfg, t, X)
        g = u_semiclassical(H, None, t, axes, hbar, threads=threads)
        Qs = husimi_of_symbol(g, X)
        maslov = sorted({v.maslov for vals in g.sheets for v in vals})
        out.append({"t": float(t), "min_alignment": float(np.min((Qs * Qo.conj()).real)),
                    "max_deviation": float(np.max(np.abs(Qs - Qo))), "maslov": maslov})
    return out


def check_quadratic_exact_u(sc, params, ctx) -> CheckResult:
    """Semiclassical propagator symbol versus the closed form, plus the Maslov sign."""
    H = _hamiltonian(sc, params)
    tol = float(params.get("tol", 1e-6))
    times = _numbers(params.get("times", ["0.5", "pi/2", "2.5"]))
    hbar = number(params.get("hbar", sc.hbars[0]))
    rows, worst = [], 0.0
    amp_dev = None
    for t in times:
        g = u_semiclassical(H, None, t, sc.axes, hbar, threads=ctx.threads)
        ex = quadratic_exact_u(H, 0.0, t, sc.axes, hbar)
        mask = g.mask("nonfocal")
        dev = float(np.max(np.abs(g.values - ex.values)[mask]))
        amps = np.array([v.amplitude for vals in g.sheets for v in vals])
        rows.append({"t": t, "deviation": dev, "amplitude_min": float(amps.min()), "amplitude_max": float(amps.max())})
        worst = max(worst, dev)
        if abs(t - np.pi / 2) < 1e-12:
            amp_dev = float(np.max(np.abs(amps - np.sqrt(2.0) ** H.n)))
    metrics = {"rows": rows, "worst": worst, "tol": tol, "amplitude_sqrt2_deviation": amp_dev}
    passed = worst < tol and (amp_dev is None or amp_dev < 1e-8)
    hs = params.get("husimi")
    if hs is not None:
        rng = _rng(sc, params)
        box = float(hs.get("box", 1.0))
        X = rng.uniform(-box, box, (int(hs.get("points", 20)), H.dim))
        L, n = hs.get("grid", [6.0, 241])
        axes = (np.linspace(-L, L, int(n)),) * H.dim
        sign = husimi_sign_test(H, _numbers(hs.get("times", ["pi-0.6", "pi+0.6"])), X, axes, hbar,
                                tuple(hs.get("oracle_q", [-12.0, 12.0, 384])), float(hs.get("dt", 1e-3)),
                                ctx.threads)
        metrics["husimi"] = sign
        passed = passed and all(r["min_alignment"] > 0 for r in sign)
        if len(sign) > 1:
            metrics["maslov_changed"] = sign[0]["maslov"] != sign[-1]["maslov"]
            passed = passed and metrics["maslov_changed"]
    return CheckResult("quadratic_exact_u", 2, passed, metrics)


# ---------------------------------------------------------------------------
# criterion 3
# ---------------------------------------------------------------------------

def check_caustic_time(sc, params, ctx) -> CheckResult:
    """Bisection caustic time, its grid classification and the ``det(K + I)`` root."""
    H = _hamiltonian(sc, params)
    t_lo, t_hi = _numbers(params.get("t_range", [2.5, 4.0]))
    tol_t = float(params.get("tol", 1e-3))
    rng = _rng(sc, params)
    X0 = rng.uniform(-2.0, 2.0, (int(params.get("samples", 8)), H.dim))
    events = caustic_times(H, sc.kind, sc.phase0, t_lo, t_hi, X0)
    metrics = {"events": [{"t": e.t, "sigma_min": e.sigma_min, "det": e.det, "iterations": e.iterations}
                          for e in events]}
    if not events:
        return CheckResult("caustic_time", 3, False, metrics, ["no caustic time found"])
    tc = events[0].t
    ref = None
    if H.is_quadratic:
        eye = np.eye(H.dim)
        r = minimize_scalar(lambda s: abs(np.linalg.det(quadratic_propagate(H, 0.0, s).K + eye)),
                            bounds=(t_lo, t_hi), method="bounded", options={"xatol": 1e-12})
        ref = float(r.x)
        metrics["det_root"] = ref
        metrics["det_at_bisection"] = float(abs(np.linalg.det(quadratic_propagate(H, 0.0, tc).K + eye)))
    expected = number(params["expected"]) if "expected" in params else ref
    offsets = _numbers(params.get("offsets", [0.0]))
    classes = []
    all_caustic = True
    for off in offsets:
        g = u_semiclassical(H, sc.phase0, tc + off, sc.axes, sc.hbars[0], threads=ctx.threads) \
            if sc.kind is ProblemKind.SCHRODINGER else \
            rho_semiclassical(H, sc.phase0, tc + off, sc.axes, sc.hbars[0], threads=ctx.threads)
        frac = float(np.mean(g.status == STATUS_CODES["caustic"]))
        classes.append({"offset": off, "caustic_fraction": frac})
        all_caustic = all_caustic and frac == 1.0
    metrics["classification"] = classes
    metrics["t_caustic"] = tc
    passed = all_caustic
    if expected is not None:
        metrics["error"] = abs(tc - expected)
        passed = passed and abs(tc - expected) < tol_t
    if ref is not None:
        passed = passed and abs(tc - ref) < tol_t
    return CheckResult("caustic_time", 3, passed, metrics)


# ---------------------------------------------------------------------------
# criterion 4
# ---------------------------------------------------------------------------

def hbar_order_table(H, phase0, t, hbars, settings, box, points_per_axis=60, threads=1) -> list:
    """``E(hbar) = max |rho_sc - rho_oracle|`` over the interior box for each ``hbar``."""
    rows = []
    for hbar in hbars:
        W = _weyl_grid(settings, hbar)
        cfg = _oracle_cfg(H, W, settings)
        ref = density_symbols(_initial_symbol(W, phase0), cfg, [t], _oracle_method(H, settings))[0]
        qi, pj = _oracle_window(W, box, points_per_axis)
        rs = rho_semiclassical(H, phase0, t, (W.q[qi], W.p[pj]), hbar, threads=threads)
        mask = rs.mask("nonfocal")
        err = float(np.max(np.abs(rs.values - ref.values[np.ix_(qi, pj)])[mask]))
        rows.append({"hbar": hbar, "error": err, "points": int(mask.sum()),
                     "oracle_edge_fraction": float(W.edge_fraction(ref.values))})
    for a, b in zip(rows, rows[1:]):
        b["ratio"] = a["error"] / b["error"]
    return rows


def check_hbar_order(sc, params, ctx) -> CheckResult:
    """Error ratios between successive halvings of ``hbar`` lie in ``[lo, hi]``."""
    H = _hamiltonian(sc, params)
    t = number(params.get("t", 1.0))
    hbars = _numbers(params.get("hbar", [0.5, 0.25, 0.125]))
    lo, hi = params.get("ratio_bounds", [3.0, 5.0])
    box = params.get("box", [[-3.5, 3.5], [-3.5, 3.5]])
    rows = hbar_order_table(H, sc.phase0, t, hbars, sc.oracle_settings(), box,
                            int(params.get("points_per_axis", 60)), ctx.threads)
    ratios = [r["ratio"] for r in rows[1:]]
    passed = bool(ratios) and all(lo <= r <= hi for r in ratios)
    return CheckResult("hbar_order", 4, passed, {"rows": rows, "ratios": ratios, "bounds": [lo, hi]})


# ---------------------------------------------------------------------------
# criterion 5
# ---------------------------------------------------------------------------

def check_composition(sc, params, ctx) -> CheckResult:
    """Stationary-phase triple product against the direct semiclassical density."""
    tol = float(params.get("tol", 1e-5))
    t = number(params.get("t", 0.3))
    hbar = number(params.get("hbar", sc.hbars[0]))
    rng = _rng(sc, params)
    box = float(params.get("box", 1.5))
    sections = params.get("hamiltonians", [None])
    rows, worst = [], 0.0
    for sec in sections:
        H = sc.H if sec is None else _hamiltonian(sc, {"hamiltonian": sec})
        X = rng.uniform(-box, box, (int(params.get("points", 50)), H.dim))
        ev = evaluate_points(H, "heisenberg", sc.phase0, t, X, threads=ctx.threads, manifold=None)
        direct = ev.field(hbar)
        comp = stationary_phase_compose(H, sc.phase0, t, X, hbar)
        ok = (ev.status == STATUS_CODES["nonfocal"]) & np.array([c.converged for c in comp])
        vals = np.array([c.value for c in comp])
        dev = float(np.max(np.abs(vals - direct)[ok])) if ok.any() else float("inf")
        rows.append({"hamiltonian": H.label, "points": int(ok.sum()), "deviation": dev,
                     "det_identity": float(max(c.det_identity_defect for c in comp)),
                     "midpoint": float(max(c.midpoint_defect for c in comp)),
                     "signatures": sorted({int(c.signature) for c in comp})})
        worst = max(worst, dev)
        for sh in ev.sheets:
            ctx.forward_residuals.extend(s.residual for s in sh)
    return CheckResult("composition", 5, worst < tol, {"rows": rows, "worst": worst, "tol": tol})


# ---------------------------------------------------------------------------
# criterion 6
# ---------------------------------------------------------------------------

def _erf_window(z, a, s):
    from scipy.special import erf

    return 0.5 * (erf((z + a) / s) - erf((z - a) / s))


def star_suite(q_range=(-8.0, 8.0), n_points=256, hbar=1.0) -> dict:
    """Unit, commutator, idempotence and associativity defects on one Weyl grid.

    The commutator uses ``q`` and ``p`` multiplied by smooth erf windows
    (``|q| < 5`` and ``|p| < p_max / 2``) and is compared with ``i hbar`` on
    ``|q| < 2``, ``|p| < p_max / 5``.  Idempotence uses the Wigner function
    of the ground state ``(2) exp(-(q^2 + p^2) / hbar)``.
    """
    W = WeylGrid(q_range[0], q_range[1], n_points, hbar)
    gauss = W.sample(lambda X: 2.0 * np.exp(-(X[..., 0] ** 2 + X[..., 1] ** 2) / hbar))
    f = W.symbol_grid(gauss)
    one = W.symbol_grid(np.ones(W.shape))
    unit = max(np.max(np.abs(star_product(f, one).values - gauss)),
               np.max(np.abs(star_product(one, f).values - gauss)))
    idem = np.max(np.abs(star_product(f, f).values - gauss))
    pm = W.p_max

    def win(X):
        return _erf_window(X[..., 0], 5.0, 0.5) * _erf_window(X[..., 1], 0.5 * pm, 0.05 * pm)

    qs = W.symbol_grid(W.sample(lambda X: X[..., 0] * win(X)))
    ps = W.symbol_grid(W.sample(lambda X: X[..., 1] * win(X)))
    comm = star_product(qs, ps).values - star_product(ps, qs).values
    Q, P = np.meshgrid(W.q, W.p, indexing="ij")
    inner = (np.abs(Q) < 2.0) & (np.abs(P) < 0.2 * pm)
    comm_dev = np.max(np.abs(comm[inner] - 1j * hbar))
    assoc = star_product3(f, f, f).meta["associativity_defect"]
    return {"unit": float(unit), "commutator": float(comm_dev), "idempotence": float(idem),
            "associativity": float(assoc), "trace": float(W.trace(gauss).real), "p_max": float(pm)}


def check_star_suite(sc, params, ctx) -> CheckResult:
    m = star_suite(tuple(params.get("q_range", [-8.0, 8.0])), int(params.get("n_points", 256)),
                   number(params.get("hbar", 1.0)))
    passed = m["unit"] < 1e-10 and m["commutator"] < 1e-6 and m["idempotence"] < 1e-6
    return CheckResult("star_suite", 6, passed, m)


# ---------------------------------------------------------------------------
# criterion 7
# ---------------------------------------------------------------------------

def polygon_identity_defects(rng, trials=20, n_max=7) -> dict:
    """Largest relative defects of the polygon-phase identities on random points.

    The cyclic law is checked in its general form
    ``P_N(x2, ..., xN, x1) = P_N + 4 delta_N x1 ^ S_N`` (``delta_N = 1`` for
    even ``N``), which reduces to plain invariance for odd ``N``.
    """
    worst = {"recurrence": 0.0, "translation": 0.0, "reflection": 0.0, "cyclic": 0.0,
             "anticyclic": 0.0, "polygon_area": 0.0}
    for _ in range(trials):
        for N in range(3, n_max + 1):
            x = rng.normal(size=(N, 2))
            a = rng.normal(size=2)
            P = polygon_phase(x)
            S = alternating_sum(x)
            even = 1.0 if N % 2 == 0 else 0.0
            scale = max(1.0, float(np.sum(np.abs(x)) ** 2))
            prev = polygon_phase(x[:-1]) if N > 3 else 2.0 * wedge(x[0], x[1])
            rec = prev + (-1) ** (N + 1) * 2.0 * wedge(x[-1], alternating_sum(x[:-1]))
            checks = {
                "recurrence": P - rec,
                "translation": polygon_phase(x + a) - (P - even * 2.0 * wedge(a, S)),
                "reflection": polygon_phase(-x) - P,
                "cyclic": polygon_phase(np.roll(x, -1, axis=0)) - P - even * 4.0 * wedge(x[0], S),
                "anticyclic": polygon_phase(x[::-1]) + P,
            }
            if N % 2:
                checks["polygon_area"] = loop_area(polygon_loop(x)) - P
            for k, v in checks.items():
                worst[k] = max(worst[k], abs(float(v)) / scale)
    return worst


def hj_order(H, kind, phase0, t, X, steps=(0.1, 0.05, 0.025)) -> dict:
    """Observed order of the central-difference H-J residual under refinement."""
    fn = single_sheet_phase(H, kind, phase0, manifold=None)
    res = [float(np.max(np.abs(hj_residual_points(H, kind, fn, t, X, h)))) for h in steps]
    slope = float(np.polyfit(np.log(steps), np.log(res), 1)[0])
    return {"steps": list(steps), "residuals": res, "order": slope}


def check_geometry_suite(sc, params, ctx) -> CheckResult:
    """Polygon identities, loop closure, Poincare-Cartan, additivity and H-J order."""
    H, phase0 = _hamiltonian(sc, params), sc.phase0
    rng = _rng(sc, params)
    metrics = {"polygon": polygon_identity_defects(rng)}
    # loop closure on the sheets of a short-time evaluation
    X = rng.uniform(-1.0, 1.0, (int(params.get("loop_points", 20)), H.dim))
    t_loop = number(params.get("loop_time", 0.3))
    gaps = []
    for kind in ("schrodinger", "heisenberg"):
        ev = evaluate_points(H, kind, phase0, t_loop, X, threads=ctx.threads, manifold=None, cross_check=0)
        for sh in (s for ss in ev.sheets for s in ss):
            ctx.forward_residuals.append(sh.residual)
            which = ("L~",) if kind == "schrodinger" else ("W", "L")
            for w in which:
                gaps.append(build_loop(sh, w, H).gap())
    metrics["loop_closure"] = float(max(gaps, default=0.0))
    # Poincare-Cartan on random chords
    n_pc = int(params.get("chords", 100))
    t_pc = rng.uniform(-2.0, 2.0, n_pc)
    x1 = rng.uniform(-1.5, 1.5, (n_pc, H.dim))
    x2 = x1 + rng.normal(scale=0.5, size=(n_pc, H.dim))
    pc = [abs(float(poincare_cartan_defect(H, x1[i], x2[i], t_pc[i])[0])) for i in range(n_pc)]
    metrics["poincare_cartan"] = float(max(pc))
    # additivity within the contraction horizon
    horizon = H.contraction_horizon()
    if not np.isfinite(horizon) or horizon <= 0:
        horizon = float(params.get("horizon", 0.4))
    n_add = int(params.get("additivity_draws", 50))
    add, inconclusive = 0.0, 0
    if not H.time_dependent:
        for i in range(n_add):
            t1, t2 = rng.uniform(0.05, 0.5, 2) * horizon
            x = rng.uniform(-1.0, 1.0, H.dim)
            kind = "schrodinger" if i % 2 == 0 else "heisenberg"
            rep = additivity_check(H, phase0, kind, float(t1), float(t2), x)
            if rep.conclusive:
                add = max(add, rep.worst)
            else:
                inconclusive += 1
    metrics["additivity"] = add
    metrics["additivity_inconclusive"] = inconclusive
    metrics["horizon"] = horizon
    # Hamilton-Jacobi order
    t_hj = number(params.get("hj_time", 0.3))
    Xh = rng.uniform(-0.8, 0.8, (6, H.dim))
    metrics["hj"] = {kind: hj_order(H, kind, phase0, t_hj, Xh) for kind in ("schrodinger", "heisenberg")}
    poly = max(metrics["polygon"].values())
    passed = (poly < 1e-12 and metrics["loop_closure"] < 1e-9 and metrics["poincare_cartan"] < 1e-6
              and add < 1e-6 and all(v["order"] >= 1.8 for v in metrics["hj"].values()))
    return CheckResult("geometry_suite", 7, passed, metrics)


# ---------------------------------------------------------------------------
# criterion 8
# ---------------------------------------------------------------------------

def contraction_probes(H, phase0, n_probes, rng, box=2.0, n_times=40, tol=DEFAULT_TOL) -> dict:
    """Fixed-point solves at random ``(t, x)`` with ``0 < t <= t1``.

    The probes share ``n_times`` random times so that each time is one
    batched solve; positions are drawn independently for every probe.
    """
    t1 = H.contraction_horizon()
    if not np.isfinite(t1) or t1 <= 0:
        raise ScenarioError("contraction probes need a finite declared Hessian bound")
    pool = rng.uniform(0.0, 1.0, n_times) * t1
    ts = pool[np.arange(n_probes) % n_times]
    X = rng.uniform(-box, box, (n_probes, H.dim))
    kinds = ["schrodinger", "heisenberg"]
    failures, worst = 0, 0.0
    for k, kind in enumerate(kinds):
        sel = np.flatnonzero((np.arange(n_probes) // n_times) % 2 == k)
        for t in np.unique(ts[sel]):
            pts = X[sel][ts[sel] == t]
            try:
                sheets = solve_short_time(H, kind, phase0, pts, float(t), tol)
            except ContractionError:
                failures += len(pts)
                continue
            worst = max(worst, max(s.residual for s in sheets))
    return {"probes": n_probes, "horizon": float(t1), "failures": failures, "max_residual": float(worst)}


def check_bc_contract(sc, params, ctx) -> CheckResult:
    """Forward residuals of every emitted sheet and contraction within ``t1``."""
    metrics = {"max_forward_residual": ctx.max_forward_residual, "sheets": len(ctx.forward_residuals)}
    passed = ctx.max_forward_residual < 1e-9
    n = int(params.get("probes", 1000))
    if n:
        H = _hamiltonian(sc, params)
        pr = contraction_probes(H, sc.phase0, n, _rng(sc, params), float(params.get("box", 2.0)))
        metrics["contraction"] = pr
        passed = passed and pr["failures"] == 0 and pr["max_residual"] < 1e-9
    return CheckResult("bc_contract", 8, passed, metrics)


# ---------------------------------------------------------------------------
# zero-phase transport
# ---------------------------------------------------------------------------

def check_egorov(sc, params, ctx) -> CheckResult:
    """With ``S0 = 0`` the phase vanishes and the amplitude is ``alpha0(g(-t | x))``."""
    if not (sc.phase0.zero_phase and sc.kind is ProblemKind.HEISENBERG):
        raise ScenarioError("the transport check needs a Heisenberg scenario with zero phase", "outputs.checks")
    H = sc.H
    X = grid_points(sc.axes)
    rows = []
    worst_phase, worst_amp = 0.0, 0.0
    for t in _numbers(params.get("times", sc.times)):
        ev = evaluate_points(H, "heisenberg", sc.phase0, t, X, threads=ctx.threads)
        back = flow_batch(H, X, -t, jacobian=False, threads=ctx.threads).end
        amp_ref = sc.phase0.amplitude(back)
        ph = np.array([v[0].phase if len(v) == 1 else np.nan for v in ev.values])
        amp = np.array([v[0].amplitude if len(v) == 1 else np.nan for v in ev.values])
        single = np.isfinite(ph)
        dp = float(np.max(np.abs(ph[single]))) if single.any() else 0.0
        da = float(np.max(np.abs(amp - amp_ref)[single])) if single.any() else 0.0
        rows.append({"t": t, "single_sheet_points": int(single.sum()), "points": len(X),
                     "max_phase": dp, "amplitude_deviation": da})
        worst_phase, worst_amp = max(worst_phase, dp), max(worst_amp, da)
    tol = float(params.get("tol", 1e-8))
    passed = worst_phase == 0.0 and worst_amp < tol and all(r["single_sheet_points"] == r["points"] for r in rows)
    return CheckResult("egorov", None, passed, {"rows": rows, "tol": tol})


CHECKS = {
    "quadratic_exact_rho": check_quadratic_exact_rho,
    "quadratic_exact_u": check_quadratic_exact_u,
    "caustic_time": check_caustic_time,
    "hbar_order": check_hbar_order,
    "composition": check_composition,
    "star_suite": check_star_suite,
    "geometry_suite": check_geometry_suite,
    "bc_contract": check_bc_contract,
    "egorov": check_egorov,
}


def run_check(name: str, sc, params: dict, ctx: RunContext) -> CheckResult:
    if name not in CHECKS:
        raise ScenarioError(f"unknown check {name!r}; known: {', '.join(sorted(CHECKS))}", "outputs.checks")
    return CHECKS[name](sc, params, ctx)
