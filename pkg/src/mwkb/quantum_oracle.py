"""Exact quantum reference for ``H = c p^2 + V(t, q)`` in one dimension.

Wave functions (or the columns of a density kernel) are advanced with the
Strang splitting

``exp(-i V dt / 2 hbar) F^{-1} exp(-i c p^2 dt / hbar) F exp(-i V dt / 2 hbar)``

on a periodic FFT grid; time-dependent potentials are sampled at the middle
of each step.  Weyl symbols of the results come from
:mod:`mwkb.weyl_calculus`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InstabilityError, ScenarioError
from .hamiltonian_model import HamiltonianModel
from .symbol_grid import SymbolGrid
from .weyl_calculus import WaveFunction, WeylGrid, wigner_transform

__all__ = [
    "SplitStepConfig",
    "coherent_state",
    "propagate",
    "propagate_columns",
    "propagate_density",
    "propagator_matrix",
    "density_symbols",
    "energy_expectation",
    "exact_rho_symbol",
    "exact_density_symbol",
    "step_convergence",
    "husimi_propagator",
    "husimi_of_symbol",
]

NORM_TOL = 1e-8
#: Largest admissible phase accumulated per step by the relevant energy band.
PHASE_PER_STEP = 0.1


@dataclass(frozen=True, eq=False)
class SplitStepConfig:
    """Grid and stepping parameters of the split-step propagator.

    Attributes
    ----------
    q : ndarray
        Uniform position grid.
    hbar : float
    dt : float
        Largest time step; each run uses ``ceil(|t - t0| / dt)`` equal steps.
    potential : callable
        ``V(t, q)``.
    kinetic : float
        Coefficient ``c`` of ``c p^2`` (``1 / 2m``).
    time_dependent : bool
    """

    q: np.ndarray
    hbar: float
    dt: float
    potential: object
    kinetic: float = 0.5
    time_dependent: bool = False

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1 or len(q) < 8:
            raise ScenarioError("split-step grid must be one-dimensional with at least 8 points")
        if not (self.dt > 0 and self.hbar > 0 and self.kinetic > 0):
            raise ScenarioError("dt, hbar and the kinetic coefficient must be positive")
        object.__setattr__(self, "q", q)

    @classmethod
    def from_hamiltonian(cls, H: HamiltonianModel, q, hbar: float, dt: float) -> "SplitStepConfig":
        """Configuration for a separable one-dimensional Hamiltonian."""
        if H.n != 1 or not H.is_separable:
            raise ScenarioError(f"the oracle needs a separable one-dimensional Hamiltonian, got {H.label!r}")
        return cls(np.asarray(q, dtype=float), float(hbar), float(dt), H.potential, float(H.kinetic),
                   H.time_dependent)

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0])

    @property
    def momenta(self) -> np.ndarray:
        return 2 * np.pi * self.hbar * np.fft.fftfreq(len(self.q), self.dq)

    def steps(self, t: float, t0: float = 0.0) -> tuple[int, float]:
        span = t - t0
        k = max(1, math.ceil(abs(span) / self.dt - 1e-12)) if span != 0 else 0
        return k, (span / k if k else 0.0)

    def energy_band(self, states: np.ndarray, t: float = 0.0, floor: float = 1e-12) -> float:
        """Width of the energy band carried by ``states`` (columns).

        Kinetic energies count up to the largest momentum holding more than
        ``floor`` of the spectral weight; potential energies over positions
        holding more than ``floor`` of the density.
        """
        S = np.asarray(states).reshape(len(self.q), -1)
        spec = np.sum(np.abs(np.fft.fft(S, axis=0)) ** 2, axis=1)
        p = np.abs(self.momenta)
        order = np.argsort(p)[::-1]
        tail = np.cumsum(spec[order]) / spec.sum()
        p_c = p[order][np.searchsorted(tail, floor)] if tail[0] <= floor else p.max()
        dens = np.sum(np.abs(S) ** 2, axis=1)
        V = np.asarray(self.potential(t, self.q), dtype=float)
        sel = dens > floor * dens.max()
        return float(self.kinetic * p_c ** 2 + V[sel].max() - V[sel].min())

    def with_dt(self, dt: float) -> "SplitStepConfig":
        return replace(self, dt=float(dt))


def coherent_state(q, center, hbar: float = 1.0) -> WaveFunction:
    """Minimum-uncertainty state centred at ``(q0, p0)`` (unit width in scaled units)."""
    q = np.asarray(q, dtype=float)
    q0, p0 = center
    vals = (np.pi * hbar) ** -0.25 * np.exp(-(q - q0) ** 2 / (2 * hbar) + 1j * p0 * (q - 0.5 * q0) / hbar)
    return WaveFunction(q, vals, hbar)


def propagate_columns(S0, cfg: SplitStepConfig, t: float, t0: float = 0.0, check: bool = True) -> np.ndarray:
    """Advance every column of ``S0`` (shape ``(N, m)`` or ``(N,)``) from ``t0`` to ``t``.

    Raises
    ------
    InstabilityError
        If the step violates the phase-per-step bound or the norm drifts by
        more than ``1e-8``.
    """
    S = np.array(S0, dtype=complex)
    if S.shape[0] != len(cfg.q):
        raise ScenarioError("state length differs from the oracle grid")
    k, h = cfg.steps(t, t0)
    if k == 0:
        return S
    if check:
        band = cfg.energy_band(S, t0)
        if abs(h) * band / cfg.hbar >= PHASE_PER_STEP:
            raise InstabilityError(
                f"time step {abs(h):.2e} turns {abs(h) * band / cfg.hbar:.2f} rad per step; "
                f"use dt < {PHASE_PER_STEP * cfg.hbar / band:.2e}")
    norm0 = np.sum(np.abs(S) ** 2, axis=0)
    kin = np.exp(-1j * cfg.kinetic * cfg.momenta ** 2 * h / cfg.hbar)
    kin = kin.reshape((-1,) + (1,) * (S.ndim - 1))

    def half(tau):
        v = np.exp(-0.5j * np.asarray(cfg.potential(tau, cfg.q), dtype=float) * h / cfg.hbar)
        return v.reshape((-1,) + (1,) * (S.ndim - 1))

    if cfg.time_dependent:
        for i in range(k):
            Vh = half(t0 + (i + 0.5) * h)
            S = Vh * np.fft.ifft(kin * np.fft.fft(Vh * S, axis=0), axis=0)
    else:
        Vh = half(t0)
        S = Vh * S
        for i in range(k):
            S = np.fft.ifft(kin * np.fft.fft(S, axis=0), axis=0)
            S = (Vh * Vh) * S if i < k - 1 else Vh * S
    drift = np.max(np.abs(np.sum(np.abs(S) ** 2, axis=0) - norm0) / np.maximum(norm0, 1e-300))
    if check and drift > NORM_TOL:
        raise InstabilityError(f"norm drift {drift:.2e} exceeds {NORM_TOL:g}")
    return S


def _grid_hamiltonian(cfg: SplitStepConfig, t: float) -> np.ndarray:
    """Matrix of ``c p^2 + V`` on the periodic grid (the operator Strang stepping converges to)."""
    N = len(cfg.q)
    F = np.fft.fft(np.eye(N), axis=0)
    T = np.conj(F.T) @ (cfg.kinetic * cfg.momenta[:, None] ** 2 * F) / N
    Hm = 0.5 * (T + np.conj(T.T))
    Hm[np.diag_indices(N)] += np.asarray(cfg.potential(t, cfg.q), dtype=float)
    return Hm


def propagator_matrix(cfg: SplitStepConfig, t: float, t0: float = 0.0, method: str = "strang") -> np.ndarray:
    """Grid propagator ``A`` from ``t0`` to ``t``.

    ``"strang"`` applies the split-step scheme to the identity columns (no
    phase-per-step check, since unit vectors carry the full band);
    ``"spectral"`` diagonalises the grid Hamiltonian and is exact in time
    for static potentials.
    """
    N = len(cfg.q)
    if method == "strang":
        return propagate_columns(np.eye(N, dtype=complex), cfg, t, t0, check=False)
    if method != "spectral":
        raise ScenarioError(f"unknown propagation method {method!r}")
    if cfg.time_dependent:
        raise ScenarioError("the spectral propagator needs a static potential")
    E, V = np.linalg.eigh(_grid_hamiltonian(cfg, t0))
    return (V * np.exp(-1j * E * (t - t0) / cfg.hbar)) @ np.conj(V.T)


def propagate(psi0: WaveFunction, cfg: SplitStepConfig, t: float, t0: float = 0.0) -> WaveFunction:
    """Wave function at ``t`` from ``psi0`` at ``t0``."""
    if len(psi0.q) != len(cfg.q) or not np.allclose(psi0.q, cfg.q):
        raise ScenarioError("wave function grid differs from the oracle grid")
    return WaveFunction(cfg.q, propagate_columns(psi0.values, cfg, t, t0), cfg.hbar)


def propagate_density(K0, cfg: SplitStepConfig, t: float, t0: float = 0.0, method: str = "strang") -> np.ndarray:
    """``A K0 A^dagger`` with ``A`` the propagator from ``t0`` to ``t``."""
    if method == "spectral":
        A = propagator_matrix(cfg, t, t0, "spectral")
        return A @ np.asarray(K0) @ np.conj(A.T)
    K1 = propagate_columns(K0, cfg, t, t0)
    return propagate_columns(K1.conj().T, cfg, t, t0).conj().T


def energy_expectation(psi: WaveFunction, cfg: SplitStepConfig, t: float = 0.0) -> float:
    """``<psi|H|psi> / <psi|psi>``."""
    v = psi.values
    phat = np.fft.fft(v)
    kin = np.sum(cfg.kinetic * cfg.momenta ** 2 * np.abs(phat) ** 2) / np.sum(np.abs(phat) ** 2)
    dens = np.abs(v) ** 2
    pot = np.sum(np.asarray(cfg.potential(t, cfg.q)) * dens) / np.sum(dens)
    return float(kin + pot)


def exact_rho_symbol(psi0: WaveFunction, cfg: SplitStepConfig, t: float, n_p: int | None = None) -> SymbolGrid:
    """Wigner symbol of the propagated pure state."""
    g = wigner_transform(propagate(psi0, cfg, t), n_p)
    return replace(g, t=float(t), kind="oracle")


def exact_density_symbol(rho0: SymbolGrid, cfg: SplitStepConfig, t: float, method: str = "strang") -> SymbolGrid:
    """Symbol at ``t`` of the operator whose symbol at time 0 is ``rho0``."""
    W = WeylGrid.from_symbol_grid(rho0)
    if W.N != len(cfg.q) or not np.allclose(W.kernel_q, cfg.q) or W.hbar != cfg.hbar:
        raise ScenarioError("symbol grid and oracle grid or hbar differ")
    K = propagate_density(W.symbol_to_kernel(rho0.values), cfg, t, method=method)
    return W.symbol_grid(W.kernel_to_symbol(K), t, "oracle", dict(rho0.meta))


def density_symbols(rho0: SymbolGrid, cfg: SplitStepConfig, times, method: str = "strang") -> list:
    """Symbols at several times from one propagator sweep.

    The grid propagator is advanced from one requested time to the next
    (sorted by ``|t|`` on each side of zero), so a Strang sweep to the
    latest time serves all earlier ones.
    """
    W = WeylGrid.from_symbol_grid(rho0)
    if W.N != len(cfg.q) or not np.allclose(W.kernel_q, cfg.q) or W.hbar != cfg.hbar:
        raise ScenarioError("symbol grid and oracle grid or hbar differ")
    K0 = W.symbol_to_kernel(rho0.values)
    N = len(cfg.q)
    out = {}
    for sign in (1.0, -1.0):
        ts = sorted({float(t) for t in times if np.sign(t) == sign or (t == 0 and sign > 0)}, key=abs)
        A, prev = np.eye(N, dtype=complex), 0.0
        for t in ts:
            A = propagator_matrix(cfg, t, prev, method) @ A
            prev = t
            out[t] = W.symbol_grid(W.kernel_to_symbol(A @ K0 @ np.conj(A.T)), t, "oracle", dict(rho0.meta))
    return [out[float(t)] for t in times]


def step_convergence(psi0: WaveFunction, cfg: SplitStepConfig, t: float) -> float:
    """Largest change of the propagated state when the step is halved."""
    a = propagate(psi0, cfg, t).values
    b = propagate(psi0, cfg.with_dt(0.5 * cfg.dt), t).values
    return float(np.max(np.abs(a - b)))


def husimi_propagator(cfg: SplitStepConfig, t: float, X) -> np.ndarray:
    """Coherent-state diagonal ``<z_x| U(t) |z_x>`` at the phase-space points ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.stack([coherent_state(cfg.q, x, cfg.hbar).values for x in X], axis=1)
    UZ = propagate_columns(Z, cfg, t)
    return np.sum(Z.conj() * UZ, axis=0) * cfg.dq


def husimi_of_symbol(grid: SymbolGrid, X) -> np.ndarray:
    """``(pi hbar)^{-1} int A(x') exp(-|x - x'|^2 / hbar) dx'`` by the trapezoid rule on ``grid``."""
    if len(grid.axes) != 2:
        raise ScenarioError("Husimi smoothing is implemented for one degree of freedom")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    q, p = grid.axes
    wq = np.full(len(q), q[1] - q[0])
    wq[[0, -1]] *= 0.5
    wp = np.full(len(p), p[1] - p[0])
    wp[[0, -1]] *= 0.5
    out = np.empty(len(X), dtype=complex)
    for i, (a, b) in enumerate(X):
        kern = np.exp(-((q[:, None] - a) ** 2 + (p[None, :] - b) ** 2) / grid.hbar)
        out[i] = np.einsum("ij,i,j->", grid.values * kern, wq, wp) / (np.pi * grid.hbar)
    return out
