"""Weyl-symbol Hamiltonians and initial phase data.

A :class:`HamiltonianModel` bundles vectorised evaluators for ``H``, its
gradient and its Hessian.  Two kinds exist:

``quadratic``
    ``H(t, x) = 1/2 x.H''(t) x + H'(t).x + c(t)``.  The coefficient functions
    are kept so that closed-form propagators can be built.
``analytic``
    Arbitrary smooth ``H`` given by an expression (exact symbolic
    derivatives) or by user callables (checked against finite differences).

Only the principal symbol is modelled; higher ``hbar`` corrections to the
Hamiltonian symbol are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import sympy as sp

from .config import DEFAULT_TOL
from .errors import DimensionError, EvaluationError, ScenarioError
from .expressions import T_SYMBOL, CompiledExpression

__all__ = [
    "HamiltonianModel",
    "InitialPhaseData",
    "harmonic_oscillator",
    "free_particle",
    "quartic_oscillator",
    "pendulum",
    "driven_oscillator",
    "quadratic_hamiltonian",
    "hamiltonian_from_expression",
    "hamiltonian_from_callables",
    "check_derivatives",
    "initial_data_from_expressions",
    "zero_phase_data",
    "gaussian_symbol_data",
    "compose_affine",
]

Field = Callable[[float, np.ndarray], np.ndarray]


def _finite(arr: np.ndarray, what: str, x) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(np.reshape(arr, (np.shape(x)[:-1] or (1,)) + (-1,))))
        where = np.reshape(x, (-1, np.shape(x)[-1]))[bad[0][0]] if bad.size else x
        raise EvaluationError(f"non-finite {what}", np.asarray(where).tolist())
    return arr


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """Scalar Hamiltonian symbol on ``R^{2n}``.

    Attributes
    ----------
    n : int
    kind : {"quadratic", "analytic"}
    c1 : float
        Declared bound on ``||H''||`` (``inf`` if unknown).  Only used to
        report the guaranteed contraction horizon.
    time_dependent : bool
    label : str
    spec : dict
        JSON-able description (used for hashing and re-construction).
    """

    n: int
    kind: str
    _value: Field = field(repr=False)
    _grad: Field = field(repr=False)
    _hess: Field = field(repr=False)
    c1: float = float("inf")
    time_dependent: bool = False
    label: str = "H"
    spec: dict = field(default_factory=dict, repr=False)
    hess_fn: Callable[[float], np.ndarray] | None = field(default=None, repr=False)
    lin_fn: Callable[[float], np.ndarray] | None = field(default=None, repr=False)
    kinetic: float | None = None
    potential: Callable[[float, np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def is_quadratic(self) -> bool:
        return self.kind == "quadratic"

    @property
    def is_separable(self) -> bool:
        """True for ``a |p|^2 + V(q, t)`` (the form the quantum oracle handles)."""
        return self.kinetic is not None and self.potential is not None

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"expected points of length {self.dim}, got shape {x.shape}")
        return x

    def value(self, t: float, x) -> np.ndarray:
        x = self._check_x(x)
        return _finite(self._value(t, x), "H value", x)

    def grad(self, t: float, x) -> np.ndarray:
        x = self._check_x(x)
        return _finite(self._grad(t, x), "H gradient", x)

    def hess(self, t: float, x) -> np.ndarray:
        x = self._check_x(x)
        return _finite(self._hess(t, x), "H Hessian", x)

    def eval(self, t: float, x):
        """Return ``(value, grad, hess)`` at ``(t, x)``."""
        return self.value(t, x), self.grad(t, x), self.hess(t, x)

    def contraction_horizon(self) -> float:
        """Largest ``t1`` with ``2 (exp(c1 t1) - 1) < 1``; ``0`` if ``c1`` is unbounded."""
        if not np.isfinite(self.c1) or self.c1 <= 0:
            return 0.0 if not np.isfinite(self.c1) else float("inf")
        return float(np.log(1.5) / self.c1)


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------

def _separable_parts(ce: CompiledExpression):
    """Detect ``a |p|^2 + V(q, t)`` with a common constant ``a > 0``."""
    n = ce.n
    qs, ps = ce.symbols[:n], ce.symbols[n:]
    expr = sp.expand(ce.expr)
    kin = sp.expand(expr - expr.subs({p: 0 for p in ps}))
    pot = sp.expand(expr - kin)
    a = None
    for i, p in enumerate(ps):
        coeff = sp.simplify(sp.diff(kin, p, 2) / 2)
        if coeff.free_symbols or not coeff.is_number or float(coeff) <= 0:
            return None, None
        if a is None:
            a = float(coeff)
        elif abs(a - float(coeff)) > 1e-14:
            return None, None
    if sp.simplify(kin - a * sum(p ** 2 for p in ps)) != 0:
        return None, None
    if pot.free_symbols & set(ps):
        return None, None
    fn = sp.lambdify([T_SYMBOL] + qs, pot, modules="numpy")

    def potential(t, q):
        q = np.asarray(q, dtype=float)
        if n == 1 and q.ndim >= 0 and (q.ndim == 0 or q.shape[-1] != 1):
            cols = [q]
        else:
            cols = [q[..., k] for k in range(n)]
        out = np.asarray(fn(t, *cols), dtype=float)
        return np.broadcast_to(out, np.shape(cols[0])).copy()

    return a, potential


def _quadratic_coefficients(ce: CompiledExpression):
    """Coefficient functions ``(H''(t), H'(t))`` of a quadratic expression."""
    d = 2 * ce.n
    origin = {s: 0 for s in ce.symbols}
    hess = [[sp.simplify(e.subs(origin)) for e in row] for row in ce.hess_exprs]
    lin = [sp.simplify(g.subs(origin)) for g in ce.grad_exprs]
    fh = sp.lambdify([T_SYMBOL], sp.Matrix(hess), modules="numpy")
    fl = sp.lambdify([T_SYMBOL], sp.Matrix(lin), modules="numpy")

    def hess_fn(t):
        return np.asarray(fh(t), dtype=float).reshape(d, d)

    def lin_fn(t):
        return np.asarray(fl(t), dtype=float).reshape(d)

    return hess_fn, lin_fn


def hamiltonian_from_expression(expr: str, n: int = 1, params: Mapping[str, float] | None = None,
                                c1: float | None = None, label: str | None = None) -> HamiltonianModel:
    """Build a model from an expression string.

    Polynomials of degree at most two are classified as ``quadratic``; their
    Hessian bound defaults to ``max_t ||H''||`` sampled at ``t = 0`` when not
    declared.
    """
    ce = CompiledExpression(expr, n, params)
    deg = ce.polynomial_degree()
    sep_a, sep_v = _separable_parts(ce)
    spec = {"kind": "expression", "expr": ce.source, "n": n, "params": dict(params or {}),
            "c1_bound": c1}
    common = dict(n=n, _value=ce.value, _grad=ce.grad, _hess=ce.hess,
                  time_dependent=ce.time_dependent, label=label or ce.source, spec=spec,
                  kinetic=sep_a, potential=sep_v)
    if deg is not None and deg <= 2:
        hess_fn, lin_fn = _quadratic_coefficients(ce)
        bound = c1 if c1 is not None else float(np.linalg.norm(hess_fn(0.0), 2))
        return HamiltonianModel(kind="quadratic", c1=bound, hess_fn=hess_fn, lin_fn=lin_fn, **common)
    return HamiltonianModel(kind="analytic", c1=float("inf") if c1 is None else float(c1), **common)


def quadratic_hamiltonian(hess, lin=None, label: str = "quadratic") -> HamiltonianModel:
    """Quadratic model from a constant matrix ``H''`` and optional vector ``H'``.

    ``hess`` and ``lin`` may also be callables of ``t``.
    """
    hess_fn = hess if callable(hess) else (lambda t, M=np.array(hess, dtype=float): M)
    H0 = np.asarray(hess_fn(0.0), dtype=float)
    d = H0.shape[0]
    if H0.shape != (d, d) or d % 2:
        raise DimensionError(f"H'' must be square of even size, got {H0.shape}")
    if lin is None:
        lin_fn = lambda t, v=np.zeros(d): v  # noqa: E731
    else:
        lin_fn = lin if callable(lin) else (lambda t, v=np.array(lin, dtype=float): v)
    if np.max(np.abs(H0 - H0.T)) > DEFAULT_TOL.mat:
        raise ScenarioError("H'' must be symmetric")
    td = callable(hess) or callable(lin)

    def value(t, x):
        M, v = hess_fn(t), lin_fn(t)
        return 0.5 * np.einsum("...i,ij,...j->...", x, M, x) + x @ v

    def grad(t, x):
        return x @ hess_fn(t).T + lin_fn(t)

    def hessian(t, x):
        return np.broadcast_to(hess_fn(t), x.shape[:-1] + (d, d)).copy()

    n = d // 2
    kinetic, potential = None, None
    if not td:
        Hq, Hp, Hqp = H0[:n, :n], H0[n:, n:], H0[:n, n:]
        v0 = np.asarray(lin_fn(0.0))
        if np.allclose(Hqp, 0) and np.allclose(Hp, Hp[0, 0] * np.eye(n)) and Hp[0, 0] > 0 \
                and np.allclose(v0[n:], 0):
            kinetic = 0.5 * float(Hp[0, 0])
            vq = v0[:n]

            def potential(t, q, Hq=Hq, vq=vq):
                q = np.asarray(q, dtype=float)
                qv = q[..., None] if n == 1 and (q.ndim == 0 or q.shape[-1] != 1) else q
                return 0.5 * np.einsum("...i,ij,...j->...", qv, Hq, qv) + qv @ vq

    spec = {"kind": "quadratic", "hess": H0.tolist(),
            "lin": None if lin is None or callable(lin) else np.asarray(lin, float).tolist()}
    return HamiltonianModel(n=n, kind="quadratic", _value=value, _grad=grad, _hess=hessian,
                            c1=float(np.linalg.norm(H0, 2)), time_dependent=td, label=label,
                            spec=spec, hess_fn=hess_fn, lin_fn=lin_fn,
                            kinetic=kinetic, potential=potential)


def hamiltonian_from_callables(n: int, value: Field, grad: Field, hess: Field, c1: float = float("inf"),
                               time_dependent: bool = False, label: str = "user",
                               validate: bool = True, seed: int = 0) -> HamiltonianModel:
    """Wrap user evaluators; derivatives are checked against finite differences."""
    model = HamiltonianModel(n=n, kind="analytic", _value=value, _grad=grad, _hess=hess, c1=c1,
                             time_dependent=time_dependent, label=label,
                             spec={"kind": "callables", "label": label})
    if validate:
        probes = np.random.default_rng(seed).normal(size=(8, 2 * n))
        err = check_derivatives(model, probes)
        if err > DEFAULT_TOL.fd:
            raise ScenarioError(f"supplied derivatives disagree with finite differences (rel err {err:.2e})")
    return model


def check_derivatives(H: HamiltonianModel, probes, t: float = 0.0, h: float = 1e-5) -> float:
    """Largest relative deviation of ``grad``/``hess`` from central differences."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    d = H.dim
    worst = 0.0
    for x in probes:
        g = H.grad(t, x)
        He = H.hess(t, x)
        fd_g = np.empty(d)
        fd_h = np.empty((d, d))
        for k in range(d):
            e = np.zeros(d)
            e[k] = h
            fd_g[k] = (H.value(t, x + e) - H.value(t, x - e)) / (2 * h)
            fd_h[:, k] = (H.grad(t, x + e) - H.grad(t, x - e)) / (2 * h)
        scale_g = max(1.0, np.max(np.abs(g)))
        scale_h = max(1.0, np.max(np.abs(He)))
        worst = max(worst, np.max(np.abs(fd_g - g)) / scale_g, np.max(np.abs(fd_h - He)) / scale_h)
    return float(worst)


def harmonic_oscillator(n: int = 1) -> HamiltonianModel:
    """``H = 1/2 (|q|^2 + |p|^2)``."""
    model = quadratic_hamiltonian(np.eye(2 * n), label="harmonic_oscillator")
    return _respec(model, {"kind": "builtin", "name": "harmonic_oscillator", "n": n})


def free_particle(n: int = 1, mass: float = 1.0) -> HamiltonianModel:
    """``H = |p|^2 / (2 m)``."""
    M = np.zeros((2 * n, 2 * n))
    M[n:, n:] = np.eye(n) / mass
    model = quadratic_hamiltonian(M, label="free_particle")
    model = _respec(model, {"kind": "builtin", "name": "free_particle", "n": n, "mass": mass})
    object.__setattr__(model, "kinetic", 0.5 / mass)
    object.__setattr__(model, "potential", lambda t, q: np.zeros(np.shape(q) if n == 1 else np.shape(q)[:-1]))
    return model


def quartic_oscillator(lam: float = 0.1, c1: float | None = None) -> HamiltonianModel:
    """``H = p^2/2 + q^2/2 + lam q^4`` (``n = 1``)."""
    model = hamiltonian_from_expression("p^2/2 + q^2/2 + lam*q^4", 1, {"lam": lam}, c1=c1,
                                        label="quartic_oscillator")
    return _respec(model, {"kind": "builtin", "name": "quartic_oscillator", "lam": lam, "c1_bound": c1})


def pendulum() -> HamiltonianModel:
    """``H = p^2/2 - cos q`` with the exact Hessian bound ``c1 = 1``."""
    model = hamiltonian_from_expression("p^2/2 - cos(q)", 1, c1=1.0, label="pendulum")
    return _respec(model, {"kind": "builtin", "name": "pendulum"})


def driven_oscillator(force: float = 0.3, omega: float = 1.3) -> HamiltonianModel:
    """Time-dependent quadratic ``H = p^2/2 + q^2/2 + force cos(omega t) q``."""
    model = hamiltonian_from_expression("p^2/2 + q^2/2 + f*cos(w*t)*q", 1, {"f": force, "w": omega},
                                        label="driven_oscillator")
    return _respec(model, {"kind": "builtin", "name": "driven_oscillator", "force": force, "omega": omega})


def compose_affine(H: HamiltonianModel, A) -> HamiltonianModel:
    """The Hamiltonian ``H o A^{-1}``, i.e. ``x -> H(R x + x0)``.

    The constant term produced by the shift is kept, so closed-form phases of
    the transformed problem match the original ones exactly.
    """
    R, x0 = A.R, A.x0

    def value(t, x):
        return H._value(t, x @ R.T + x0)

    def grad(t, x):
        return H._grad(t, x @ R.T + x0) @ R

    def hess(t, x):
        return np.einsum("ki,...kl,lj->...ij", R, H._hess(t, x @ R.T + x0), R)

    extra = {}
    if H.is_quadratic:
        extra["hess_fn"] = lambda t: R.T @ H.hess_fn(t) @ R
        extra["lin_fn"] = lambda t: R.T @ (H.hess_fn(t) @ x0 + H.lin_fn(t))
    sep = np.allclose(R, np.eye(H.dim)) and H.is_separable
    pot = None
    if sep:
        n = H.n
        pot = lambda t, q: H.potential(t, q + (x0[0] if n == 1 else x0[:n]))  # noqa: E731
    return HamiltonianModel(n=H.n, kind=H.kind, _value=value, _grad=grad, _hess=hess,
                            c1=H.c1 * float(np.linalg.norm(R, 2) ** 2), time_dependent=H.time_dependent,
                            label=f"{H.label} o A^-1", spec={"composed": H.spec, "R": R.tolist(),
                                                             "x0": x0.tolist()},
                            kinetic=H.kinetic if sep else None, potential=pot, **extra)


def _respec(model: HamiltonianModel, spec: dict) -> HamiltonianModel:
    object.__setattr__(model, "spec", spec)
    return model


# ---------------------------------------------------------------------------
# initial phase data
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InitialPhaseData:
    """Initial WKB data ``amplitude(x) * exp(i phase(x) / hbar)``.

    The phase plays the role of ``Phi_0`` (Schrodinger problem) or ``S_0``
    (Heisenberg problem).  ``support`` is a pair of arrays ``(lo, hi)``;
    infinite bounds mean the data are defined everywhere.
    """

    n: int
    amplitude: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    phase: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    phase_grad: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    phase_hess: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    support: tuple = (None, None)
    zero_phase: bool = False
    spec: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        lo, hi = self.support
        d = 2 * self.n
        lo = np.full(d, -np.inf) if lo is None else np.asarray(lo, dtype=float)
        hi = np.full(d, np.inf) if hi is None else np.asarray(hi, dtype=float)
        object.__setattr__(self, "support", (lo, hi))

    def in_support(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def left_right(self, x):
        """``l = x - 1/2 J grad beta0(x)`` and ``r = x + 1/2 J grad beta0(x)``."""
        from .phase_geometry import apply_J

        x = np.asarray(x, dtype=float)
        half = 0.5 * apply_J(self.phase_grad(x))
        return x - half, x + half

    def compose_affine(self, A) -> "InitialPhaseData":
        """Data transported by an affine map: every field composed with ``A^{-1}``."""
        R, x0 = A.R, A.x0

        def back(x):
            return np.asarray(x, dtype=float) @ R.T + x0

        def amp(x):
            y = back(x)
            return np.where(self.in_support(y), self.amplitude(y), 0.0)

        return InitialPhaseData(
            self.n, amp, lambda x: self.phase(back(x)),
            lambda x: self.phase_grad(back(x)) @ R,
            lambda x: np.einsum("ki,...kl,lj->...ij", R, self.phase_hess(back(x)), R),
            (None, None), self.zero_phase, {"composed": self.spec, "R": R.tolist(), "x0": x0.tolist()})

    def negated(self) -> "InitialPhaseData":
        """Same amplitude with the phase sign reversed."""
        return InitialPhaseData(self.n, self.amplitude, lambda x: -self.phase(x),
                                lambda x: -self.phase_grad(x), lambda x: -self.phase_hess(x),
                                self.support, self.zero_phase, dict(self.spec, negated=True))


def initial_data_from_expressions(amplitude: str, phase: str = "0", n: int = 1,
                                  params: Mapping[str, float] | None = None,
                                  support=(None, None)) -> InitialPhaseData:
    """Initial data from expression strings (time ``t`` is not allowed)."""
    amp = CompiledExpression(amplitude, n, params)
    ph = CompiledExpression(phase, n, params)
    if amp.time_dependent or ph.time_dependent:
        raise ScenarioError("initial data may not depend on t")
    zero = ph.expr == 0
    return InitialPhaseData(
        n=n,
        amplitude=lambda x: amp.value(0.0, x),
        phase=lambda x: ph.value(0.0, x),
        phase_grad=lambda x: ph.grad(0.0, x),
        phase_hess=lambda x: ph.hess(0.0, x),
        support=support,
        zero_phase=bool(zero),
        spec={"amplitude": amp.source, "phase": ph.source, "n": n, "params": dict(params or {})},
    )


def zero_phase_data(n: int = 1, amplitude: Callable | None = None) -> InitialPhaseData:
    """``beta0 = 0`` with unit (or given) amplitude, defined everywhere."""
    d = 2 * n
    amp = amplitude or (lambda x: np.ones(np.shape(x)[:-1]))
    return InitialPhaseData(
        n=n,
        amplitude=amp,
        phase=lambda x: np.zeros(np.shape(x)[:-1]),
        phase_grad=lambda x: np.zeros(np.shape(x)),
        phase_hess=lambda x: np.zeros(np.shape(x)[:-1] + (d, d)),
        zero_phase=True,
        spec={"amplitude": "1" if amplitude is None else "callable", "phase": "0", "n": n},
    )


def gaussian_symbol_data(center, widths, height: float = 1.0, quad=None, lin=None) -> InitialPhaseData:
    """Gaussian amplitude with an optional quadratic-plus-linear phase.

    ``amplitude = height * exp(-sum_k (x_k - c_k)^2 / (2 w_k^2))`` and
    ``phase = 1/2 (x-c).B (x-c) + b.(x-c)`` with ``B = quad`` and ``b = lin``.
    """
    c = np.asarray(center, dtype=float)
    w = np.broadcast_to(np.asarray(widths, dtype=float), c.shape).copy()
    d = c.shape[0]
    B = np.zeros((d, d)) if quad is None else np.asarray(quad, dtype=float)
    b = np.zeros(d) if lin is None else np.asarray(lin, dtype=float)
    if np.max(np.abs(B - B.T)) > DEFAULT_TOL.mat:
        raise ScenarioError("phase Hessian must be symmetric")

    def amp(x):
        z = (np.asarray(x, dtype=float) - c) / w
        return height * np.exp(-0.5 * np.sum(z * z, axis=-1))

    def phase(x):
        y = np.asarray(x, dtype=float) - c
        return 0.5 * np.einsum("...i,ij,...j->...", y, B, y) + y @ b

    def grad(x):
        y = np.asarray(x, dtype=float) - c
        return y @ B.T + b

    def hess(x):
        return np.broadcast_to(B, np.shape(x)[:-1] + (d, d)).copy()

    return InitialPhaseData(n=d // 2, amplitude=amp, phase=phase, phase_grad=grad, phase_hess=hess,
                            zero_phase=not (B.any() or b.any()),
                            spec={"gaussian": {"center": c.tolist(), "widths": w.tolist(),
                                               "height": height, "quad": B.tolist(), "lin": b.tolist()}})
