"""Entanglement dynamics of the mirror-cavity-condensate system under a
modulated pump, and the optimisation of mirror-atom entanglement.

The pump rate ``eta(t)`` enters the linearised dynamics through the
stationary cavity amplitude, which adiabatically follows the drive.  At
fixed total detuning this is ``alpha(t) = eta(t) / sqrt(Delta^2 + kappa^2)``
and the drift is affine in ``alpha``: ``K(t) = K0 + alpha(t) K1``.

Time evolution uses piecewise-constant drift on a fine grid: every step
applies the exact Van Loan propagator of the drift at the step midpoint
(a second-order scheme in the modulation, exact for constant drive).  All
step propagators of a grid are obtained with one batched matrix
exponential.  For periodic drives the one-period map ``V -> Phi V Phi^T + Q``
gives both the Floquet stability test and the long-time state.

Modes are in canonical order (M, C, A): mirror, cavity, condensate.
"""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from . import gaussian_core as gc
from .errors import (
    ArgumentError,
    ConvergenceError,
    ModelError,
    StabilityError,
)
from .models import MeanFields, build_three_mode, mean_fields

log = logging.getLogger(__name__)

KINDS = ("constant", "harmonic_window", "monochromatic", "periodic_harmonics")
CONSTRAINTS = (None, "equal_energy", "power_unit_ball")

#: Default short-time window in units of 1/kappa.
SHORT_WINDOW_KAPPA = 3.4
#: Adiabaticity threshold on max |d eta/dt| / eta in units of kappa.
ADIABATIC_LIMIT = 0.2
#: Steps per unit 1/kappa for time-dependent drift.
STEPS_PER_KAPPA = 60
#: Steps per modulation period for long-time quantities.
PERIOD_STEPS = 256
#: Allowed change of the per-period maximum between successive periods.
PERIODICITY_TOL = 1e-4
#: Weight of the excess-drop penalty in the constrained periodic objective.
DROP_PENALTY = 20.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(512)


# ---------------------------------------------------------------------------
# Modulations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Modulation:
    """Time-dependent pump rate ``eta(t)``.

    Kinds
    -----
    constant
        ``eta0``.
    harmonic_window
        ``offset + sum_j [A_j cos(w_j t) + B_j sin(w_j t)]`` on ``[0, window]``,
        with ``offset`` fixed by the equal-energy projection.
    monochromatic, periodic_harmonics
        ``eta0/8 + (eta0/2) [1 - sum_n (A_n sin(n S t) + B_n cos(n S t))]``
        with base frequency ``S = sigma``.  The monochromatic drive is the
        case ``A = (1,)``.

    Coefficients of the harmonic kinds are stored in units of ``eta0``
    for the periodic forms and in 1/s for ``harmonic_window``.
    """

    kind: str
    eta0: float
    A: tuple = ()
    B: tuple = ()
    frequencies: tuple = ()
    sigma: Optional[float] = None
    window: Optional[float] = None
    constraint: Optional[str] = None
    offset: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown modulation kind {self.kind!r}")
        if self.constraint not in CONSTRAINTS:
            raise ArgumentError(f"unknown constraint {self.constraint!r}")
        if not self.eta0 >= 0:
            raise ArgumentError("eta0 must be non-negative")
        object.__setattr__(self, "A", tuple(float(a) for a in self.A))
        object.__setattr__(self, "B", tuple(float(b) for b in self.B))
        object.__setattr__(self, "frequencies", tuple(float(w) for w in self.frequencies))
        if len(self.A) != len(self.B):
            raise ArgumentError("A and B must have the same length")
        if self.kind == "harmonic_window":
            if len(self.frequencies) != len(self.A):
                raise ArgumentError("one frequency per harmonic is required")
            if self.window is None or not self.window > 0:
                raise ArgumentError("harmonic_window needs a positive window")
            if self.offset is None:
                object.__setattr__(self, "offset", float(self.eta0))
        if self.kind in ("monochromatic", "periodic_harmonics"):
            if self.sigma is None or not self.sigma > 0:
                raise ArgumentError("periodic modulations need a positive sigma")

    # -- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, eta0: float) -> "Modulation":
        return cls("constant", eta0)

    @classmethod
    def monochromatic(cls, eta0: float, sigma: float, amplitude: float = 1.0) -> "Modulation":
        return cls("monochromatic", eta0, A=(amplitude,), B=(0.0,), sigma=sigma,
                   constraint="power_unit_ball")

    @classmethod
    def periodic(cls, eta0: float, sigma: float, A, B) -> "Modulation":
        return cls("periodic_harmonics", eta0, A=tuple(A), B=tuple(B), sigma=sigma,
                   constraint="power_unit_ball")

    @classmethod
    def windowed(cls, eta0: float, window: float, A, B, frequencies) -> "Modulation":
        """Harmonic drive on ``[0, window]`` projected onto equal energy."""
        A = np.asarray(A, float)
        B = np.asarray(B, float)
        w = np.asarray(frequencies, float)
        scale, offset = equal_energy_projection(eta0, window, A, B, w)
        return cls("harmonic_window", eta0, A=tuple(scale * A), B=tuple(scale * B),
                   frequencies=tuple(w), window=window, constraint="equal_energy",
                   offset=offset)

    # -- evaluation -------------------------------------------------------

    @property
    def period(self) -> Optional[float]:
        if self.kind in ("monochromatic", "periodic_harmonics"):
            return 2 * np.pi / self.sigma
        return None

    def eta(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        if self.kind == "constant":
            return np.full_like(t, self.eta0)
        A = np.asarray(self.A)
        B = np.asarray(self.B)
        if self.kind == "harmonic_window":
            ph = np.multiply.outer(t, np.asarray(self.frequencies))
            return self.offset + np.cos(ph) @ A + np.sin(ph) @ B
        n = np.arange(1, len(A) + 1)
        ph = np.multiply.outer(t, n * self.sigma)
        return self.eta0 / 8 + self.eta0 / 2 * (1 - np.sin(ph) @ A - np.cos(ph) @ B)

    def eta_dot(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        if self.kind == "constant":
            return np.zeros_like(t)
        A = np.asarray(self.A)
        B = np.asarray(self.B)
        if self.kind == "harmonic_window":
            w = np.asarray(self.frequencies)
            ph = np.multiply.outer(t, w)
            return -np.sin(ph) @ (w * A) + np.cos(ph) @ (w * B)
        w = np.arange(1, len(A) + 1) * self.sigma
        ph = np.multiply.outer(t, w)
        return -self.eta0 / 2 * (np.cos(ph) @ (w * A) - np.sin(ph) @ (w * B))

    def power(self) -> float:
        """``sum (A^2 + B^2)`` of the harmonic coefficients."""
        return float(np.sum(np.square(self.A)) + np.sum(np.square(self.B)))

    def energy_residual(self) -> float:
        """Relative mismatch of ``<eta^2>`` over the window against ``eta0^2``."""
        if self.kind != "harmonic_window":
            return 0.0
        mean_sq = _window_mean(lambda s: self.eta(s) ** 2, self.window)
        return float(abs(mean_sq - self.eta0**2) / self.eta0**2)

    def constraint_residual(self) -> float:
        """Violation of the attached constraint (0 when satisfied)."""
        if self.constraint == "equal_energy":
            return self.energy_residual()
        if self.constraint == "power_unit_ball":
            return max(0.0, self.power() - 1.0)
        return 0.0

    def to_dict(self) -> dict:
        return dict(kind=self.kind, eta0=self.eta0, A=list(self.A), B=list(self.B),
                    frequencies=list(self.frequencies), sigma=self.sigma,
                    window=self.window, constraint=self.constraint, offset=self.offset)

    @classmethod
    def from_dict(cls, d: dict) -> "Modulation":
        return cls(d["kind"], d["eta0"], A=tuple(d.get("A", ())), B=tuple(d.get("B", ())),
                   frequencies=tuple(d.get("frequencies", ())), sigma=d.get("sigma"),
                   window=d.get("window"), constraint=d.get("constraint"),
                   offset=d.get("offset"))


def _window_mean(f, window):
    """Gauss-Legendre average of ``f`` over ``[0, window]``."""
    s = 0.5 * window * (_GL_NODES + 1)
    return 0.5 * float(np.dot(_GL_WEIGHTS, f(s)))


def equal_energy_projection(eta0, window, A, B, frequencies):
    """Offset that makes ``<eta^2>`` over the window equal ``eta0^2``.

    With ``f`` the harmonic part, ``<(c + f)^2> = c^2 + 2 c <f> + <f^2>``;
    the larger root in ``c`` is taken.  When no real root exists the
    harmonic part is first shrunk to the largest feasible amplitude.

    Returns
    -------
    (scale, offset)
        Factor applied to ``A`` and ``B`` and the constant term.
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    w = np.asarray(frequencies, float)
    if A.size == 0:
        return 1.0, float(eta0)

    def harmonic(s):
        ph = np.multiply.outer(s, w)
        return np.cos(ph) @ A + np.sin(ph) @ B

    m1 = _window_mean(harmonic, window)
    m2 = _window_mean(lambda s: harmonic(s) ** 2, window)
    var = max(m2 - m1**2, 0.0)
    scale = 1.0
    if var > 0 and eta0**2 / var < 1.0:
        scale = float(np.sqrt(eta0**2 / var)) * (1 - 1e-12)
    m1 *= scale
    m2 *= scale**2
    disc = max(m1**2 - m2 + eta0**2, 0.0)
    return scale, float(-m1 + np.sqrt(disc))


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlSystem:
    """Three-mode system with the pump as control.

    ``follow="fixed_detuning"`` keeps the total detuning at its nominal
    value (amplitude ``eta / sqrt(Delta^2 + kappa^2)``); ``"cubic"`` holds
    the bare detuning fixed and re-solves the mean-field cubic at each
    instant, tracking the root branch continuously.
    """

    mech: object
    cavity: object
    bec: object
    follow: str = "fixed_detuning"
    K0: np.ndarray = field(init=False, repr=False)
    K1: np.ndarray = field(init=False, repr=False)
    D: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.follow not in ("fixed_detuning", "cubic"):
            raise ArgumentError(f"unknown mean-field following {self.follow!r}")
        mf = self.nominal_fields
        k0 = build_three_mode(self.mech, self.cavity, self.bec, _fields(mf.delta, 0.0))
        k1 = build_three_mode(self.mech, self.cavity, self.bec, _fields(mf.delta, 1.0))
        object.__setattr__(self, "K0", k0.K)
        object.__setattr__(self, "K1", k1.K - k0.K)
        object.__setattr__(self, "D", k0.D)

    @classmethod
    def from_params(cls, params, follow="fixed_detuning") -> "ControlSystem":
        if isinstance(params, ControlSystem):
            return params if params.follow == follow else replace(params, follow=follow)
        mech, cav, bec = params
        return cls(mech, cav, bec, follow)

    @property
    def nominal_fields(self) -> MeanFields:
        return mean_fields(self.mech, self.cavity, self.bec)

    @property
    def kappa(self) -> float:
        return self.cavity.kappa

    @property
    def eta0(self) -> float:
        return self.cavity.eta

    def initial_covariance(self) -> np.ndarray:
        """Thermal mirror, vacuum cavity and condensate."""
        return np.diag([self.mech.v_thermal / 2] * 2 + [0.5] * 4)

    def with_coupling_scale(self, factor: float) -> "ControlSystem":
        """Same system with ``chi`` (hence ``G``) scaled by ``factor``."""
        cav = replace(self.cavity, chi=self.cavity.chi_coefficient * factor)
        return ControlSystem(self.mech, cav, self.bec, self.follow)

    def drift(self, eta) -> np.ndarray:
        """Drift matrices for an array of instantaneous pump rates."""
        eta = np.atleast_1d(np.asarray(eta, float))
        if self.follow == "fixed_detuning":
            mf = self.nominal_fields
            alpha = eta / np.hypot(mf.delta, self.kappa)
            return self.K0[None] + alpha[:, None, None] * self.K1[None]
        out = np.empty((eta.size, 6, 6))
        cav = replace(self.cavity, detuning=None, bare_detuning=self.nominal_fields.bare_delta)
        branch = None
        for i, e in enumerate(eta):
            mf = mean_fields(self.mech, cav, self.bec, eta=e)
            if branch is not None and mf.branch != branch and "bistable" in mf.branch + branch:
                raise ModelError(f"mean-field branch jump ({branch} -> {mf.branch}) "
                                 f"at pump rate {e:.6g} /s")
            branch = mf.branch
            out[i] = build_three_mode(self.mech, cav, self.bec, mf).K
        return out


def _fields(delta, alpha):
    return MeanFields(delta=delta, alpha_s=alpha, q_s=0.0, Q_s=0.0,
                      branch="monostable", bare_delta=delta)


def step_maps(K, D, h):
    """Exact per-step maps ``(Phi_i, Q_i)`` for a stack of drifts ``K_i``.

    One batched exponential of the Van Loan block matrices.
    """
    K = np.asarray(K, float)
    n = K.shape[-1]
    M = np.zeros(K.shape[:-2] + (2 * n, 2 * n))
    M[..., :n, :n] = -K
    M[..., :n, n:] = D
    M[..., n:, n:] = np.swapaxes(K, -1, -2)
    F = sla.expm(M * np.asarray(h, float)[..., None, None])
    Phi = np.swapaxes(F[..., n:, n:], -1, -2)
    Q = Phi @ F[..., :n, n:]
    return Phi, 0.5 * (Q + np.swapaxes(Q, -1, -2))


def _mirror_atom_negativity(V):
    """``-ln 2 nu~`` of the (M, A) reduction for a stack of 6x6 states."""
    return _pair_exponent(V, 0, 2)


def _pair_exponent(V, i, j):
    """Two-mode ``-ln 2 nu~`` for modes ``i, j`` of a stack of states."""
    idx = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1]
    Vr = V[..., idx, :][..., :, idx] * _PT_SIGNS
    ev = np.abs(np.linalg.eigvals(1j * (_OMEGA2 @ Vr)))
    return -np.log(2 * ev.min(axis=-1))


_PT_SIGNS = np.outer([1, 1, 1, -1], [1, 1, 1, -1]).astype(float)
_OMEGA2 = gc.symplectic_form(2)


def _min_nu(V):
    n = V.shape[-1] // 2
    om = gc.symplectic_form(n)
    ev = np.abs(np.linalg.eigvals(1j * (om @ V)))
    return ev.min(axis=-1)


@dataclass(frozen=True)
class EntanglementTrace:
    """Pairwise log-negativities sampled along a trajectory."""

    times: np.ndarray
    e_ma: np.ndarray
    e_cm: np.ndarray
    e_ca: np.ndarray
    min_nu: np.ndarray
    physical_ok: bool

    def to_rows(self):
        return np.column_stack([self.times, self.e_ma, self.e_cm, self.e_ca])


def _check_adiabatic(modulation: Modulation, t, kappa):
    eta = modulation.eta(t)
    rate = np.abs(modulation.eta_dot(t)) / np.maximum(np.abs(eta), 1e-300 + 0 * eta)
    worst = float(np.max(rate)) / kappa if len(t) else 0.0
    if worst > ADIABATIC_LIMIT:
        warnings.warn(f"pump modulation is fast: max |eta'/eta| = {worst:.3g} kappa "
                      f"exceeds {ADIABATIC_LIMIT} kappa; adiabatic following may fail",
                      RuntimeWarning, stacklevel=3)
    return worst


def _growth_tol(K):
    """Growth rate above which a drift counts as unstable.  Undamped
    (purely oscillating) modes are allowed in finite-time evolution."""
    return 1e-10 * np.abs(K).max()


def _subgrid(t_grid, h_max):
    """Refine ``t_grid`` so that no step exceeds ``h_max``; returns the
    refined grid and the indices of the original samples in it."""
    pieces = [t_grid[:1]]
    idx = [0]
    for a, b in zip(t_grid[:-1], t_grid[1:]):
        k = max(1, int(np.ceil((b - a) / h_max)))
        pieces.append(np.linspace(a, b, k + 1)[1:])
        idx.append(idx[-1] + k)
    return np.concatenate(pieces), np.asarray(idx)


def _propagate(system: ControlSystem, modulation: Modulation, t_fine, V0,
               check_instant=True):
    """Covariances on ``t_fine`` from midpoint-drift exact steps."""
    h = np.diff(t_fine)
    mid = t_fine[:-1] + h / 2
    K = system.drift(modulation.eta(mid))
    if check_instant:
        ev = np.linalg.eigvals(K).real.max(axis=-1)
        bad = np.nonzero(ev > _growth_tol(K))[0]
        if len(bad):
            i = bad[0]
            raise StabilityError(f"drift unstable at t = {mid[i]:.6g} s "
                                 f"(max Re lambda = {ev[i]:.4g})",
                                 eigenvalue=ev[i], time=float(mid[i]))
    Phi, Q = step_maps(K, system.D, h)
    out = np.empty((len(t_fine), 6, 6))
    V = np.asarray(V0, float)
    out[0] = V
    for i in range(len(h)):
        V = Phi[i] @ V @ Phi[i].T + Q[i]
        out[i + 1] = V
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def entanglement_trajectory(params, modulation: Optional[Modulation], t_grid,
                            follow: str = "fixed_detuning",
                            steps_per_kappa: int = STEPS_PER_KAPPA,
                            V0=None) -> EntanglementTrace:
    """Pairwise entanglement from the physical initial state along ``t_grid``.

    Parameters
    ----------
    params : (mech, cavity, bec) or ControlSystem
    modulation : Modulation, optional
        Pump rate; constant at the cavity's nominal rate when omitted.
    t_grid : array
        Increasing sample times starting at the initial instant.
    steps_per_kappa : int
        Resolution of the piecewise-constant drift, per unit ``1/kappa``.

    Raises
    ------
    StabilityError
        if the instantaneous drift is unstable; ``err.time`` is the instant.
    """
    system = ControlSystem.from_params(params, follow)
    if modulation is None:
        modulation = Modulation.constant(system.eta0)
    t = np.asarray(t_grid, float)
    if t.ndim != 1 or len(t) < 1 or np.any(np.diff(t) <= 0):
        raise ArgumentError("time grid must be a strictly increasing 1-D array")
    if modulation.kind != "constant":
        _check_adiabatic(modulation, np.linspace(t[0], t[-1], 2001), system.kappa)
    h_max = 1.0 / (steps_per_kappa * system.kappa)
    if modulation.kind == "constant":
        h_max = np.inf
    fine, idx = _subgrid(t, h_max)
    V0 = system.initial_covariance() if V0 is None else np.asarray(V0, float)
    if modulation.kind == "constant":
        K = system.drift(modulation.eta0)[0]
        ev = np.linalg.eigvals(K).real.max()
        if ev > _growth_tol(K):
            raise StabilityError(f"drift unstable at t = {t[0]:.6g} s", eigenvalue=ev,
                                 time=float(t[0]))
        traj = gc.propagate_covariance(system.drift(modulation.eta0)[0], system.D, V0, t,
                                       method="exact", check=False)
        Vs = traj.covariances
    else:
        Vs = _propagate(system, modulation, fine, V0)[idx]
    nu = _min_nu(Vs)
    ok = bool(np.all(nu >= 0.5 - gc.TRAJECTORY_TOL))
    return EntanglementTrace(
        times=t,
        e_ma=np.maximum(_pair_exponent(Vs, 0, 2), 0.0),
        e_cm=np.maximum(_pair_exponent(Vs, 0, 1), 0.0),
        e_ca=np.maximum(_pair_exponent(Vs, 1, 2), 0.0),
        min_nu=nu,
        physical_ok=ok,
    )


# ---------------------------------------------------------------------------
# Short-time optimisation
# ---------------------------------------------------------------------------


def unmodulated_peak(params, t_max_kappa: float = 10.0, points: int = 2001):
    """Maximum over time of E_MA for the constant nominal drive.

    Returns ``(peak, time_of_peak)``.
    """
    system = ControlSystem.from_params(params)
    t = np.linspace(0, t_max_kappa / system.kappa, points)
    tr = entanglement_trajectory(system, None, t)
    i = int(np.argmax(tr.e_ma))
    return float(tr.e_ma[i]), float(t[i])


def short_time_value(system: ControlSystem, modulation: Modulation,
                     steps_per_kappa: int = STEPS_PER_KAPPA) -> float:
    """E_MA at the end of the modulation window."""
    tau = modulation.window
    n = max(1, int(np.ceil(tau * system.kappa * steps_per_kappa)))
    fine = np.linspace(0, tau, n + 1)
    V = _propagate(system, modulation, fine, system.initial_covariance())[-1]
    return float(max(_mirror_atom_negativity(V), 0.0))


@dataclass
class OptimizationResult:
    """Best modulation found and the run record."""

    modulation: Modulation
    objective: float
    seed: int
    restarts: list
    baseline: float
    robustness: Optional[dict] = None
    settings: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dict(
            objective=self.objective,
            objective_unit="log-negativity (dimensionless)",
            baseline=self.baseline,
            seed=self.seed,
            modulation=self.modulation.to_dict(),
            constraint_residual=self.modulation.constraint_residual(),
            restarts=self.restarts,
            robustness=self.robustness,
            settings=self.settings,
        ), indent=2, default=_json_default)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _short_restart(args):
    (system, tau, j_max, seed_seq, maxfev, steps, x0) = args
    rng = np.random.default_rng(seed_seq)
    shifts = rng.uniform(-np.pi / (5 * tau), np.pi / (5 * tau), size=j_max)
    freqs = 2 * np.pi * np.arange(1, j_max + 1) / tau + shifts
    eta0 = system.eta0
    if x0 is None:
        x0 = rng.normal(scale=0.3, size=2 * j_max)
    worst_residual = 0.0

    def build(x):
        return Modulation.windowed(eta0, tau, eta0 * x[:j_max], eta0 * x[j_max:], freqs)

    def objective(x):
        nonlocal worst_residual
        mod = build(x)
        worst_residual = max(worst_residual, mod.energy_residual())
        try:
            return -short_time_value(system, mod, steps)
        except StabilityError:
            return 1.0

    res = minimize(objective, np.asarray(x0, float), method="Nelder-Mead",
                   options=dict(maxfev=maxfev, adaptive=True, xatol=1e-6, fatol=1e-9))
    mod = build(res.x)
    try:
        value = short_time_value(system, mod, steps)
    except StabilityError:
        value = None
    return dict(shifts=shifts.tolist(), value=value, nfev=int(res.nfev),
                max_energy_residual=worst_residual, modulation=mod.to_dict())


def _run_restarts(func, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(func, jobs))
    return [func(j) for j in jobs]


def optimize_short_time(params, tau: Optional[float] = None, j_max: int = 4,
                        restarts: int = 24, seed: int = 0, maxfev: int = 800,
                        steps_per_kappa: int = STEPS_PER_KAPPA,
                        workers: int = 1) -> OptimizationResult:
    """Maximise E_MA at the end of ``[0, tau]`` over harmonic pump shapes.

    Every restart draws its own frequency shifts ``delta_j`` uniformly in
    ``+-pi / (5 tau)`` and a random start, then runs an adaptive
    Nelder-Mead search over ``(A_j, B_j)``.  Each proposal is projected
    onto the equal-energy surface through the constant term.  The first
    restart starts from the unmodulated drive.

    Raises
    ------
    ConvergenceError
        if every restart ends on an unstable drive.
    """
    system = ControlSystem.from_params(params)
    tau = SHORT_WINDOW_KAPPA / system.kappa if tau is None else float(tau)
    if j_max < 0 or restarts < 1:
        raise ArgumentError("j_max must be >= 0 and restarts >= 1")
    const = Modulation.windowed(system.eta0, tau, [], [], [])
    baseline = short_time_value(system, const, steps_per_kappa)
    if j_max == 0:
        return OptimizationResult(const, baseline, seed, [], baseline,
                                  settings=dict(tau=tau, j_max=0))
    streams = np.random.SeedSequence(seed).spawn(restarts)
    jobs = [(system, tau, j_max, s, maxfev, steps_per_kappa,
             np.zeros(2 * j_max) if k == 0 else None) for k, s in enumerate(streams)]
    records = _run_restarts(_short_restart, jobs, workers)
    for k, r in enumerate(records):
        log.info("short-time restart %d: shifts %s -> %s", k, r["shifts"], r["value"])
    good = [r for r in records if r["value"] is not None]
    if not good:
        raise ConvergenceError("every short-time restart ended on an unstable drive")
    best = max(good, key=lambda r: r["value"])
    return OptimizationResult(Modulation.from_dict(best["modulation"]), best["value"], seed,
                              records, baseline,
                              settings=dict(tau=tau, j_max=j_max, maxfev=maxfev,
                                            steps_per_kappa=steps_per_kappa))


# ---------------------------------------------------------------------------
# Long-time (periodic) quantities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeriodicState:
    """Post-transient covariances over one modulation period."""

    times: np.ndarray
    covariances: np.ndarray
    e_ma: np.ndarray
    floquet_radius: float
    transient_periods: int
    period_change: float

    @property
    def max_e_ma(self) -> float:
        return float(self.e_ma.max())


def _compose(a, b):
    """Map ``b`` after map ``a``."""
    Pa, Qa = a
    Pb, Qb = b
    return Pb @ Pa, Pb @ Qa @ Pb.T + Qb


def _power(m, n):
    """``n``-fold composition of an affine covariance map by squaring."""
    result = (np.eye(m[0].shape[0]), np.zeros_like(m[1]))
    base = m
    while n:
        if n & 1:
            result = _compose(result, base)
        base = _compose(base, base)
        n >>= 1
    return result


def periodic_state(params, modulation: Modulation, steps: int = PERIOD_STEPS,
                   min_periods: int = 30, follow: str = "fixed_detuning") -> PeriodicState:
    """Long-time state of a periodically modulated drive.

    The physical initial state is advanced over
    ``max(min_periods, 10 / (slowest Floquet rate * period))`` periods
    (one-period map raised to that power by squaring), then sampled over
    one more period.  The maximum of E_MA over that period is compared to
    the preceding period.

    Raises
    ------
    StabilityError
        if a Floquet multiplier has modulus >= 1.
    ConvergenceError
        if successive periods differ by more than ``PERIODICITY_TOL``.
    """
    system = ControlSystem.from_params(params, follow)
    P = modulation.period
    if P is None:
        raise ArgumentError("a periodic modulation is required")
    t = np.linspace(0.0, P, steps + 1)
    h = np.diff(t)
    K = system.drift(modulation.eta(t[:-1] + h / 2))
    Phi, Q = step_maps(K, system.D, h)
    mono = (np.eye(6), np.zeros((6, 6)))
    partial = [mono]
    for i in range(steps):
        mono = _compose(mono, (Phi[i], Q[i]))
        partial.append(mono)
    radius = float(np.abs(np.linalg.eigvals(mono[0])).max())
    if not radius < 1.0:
        raise StabilityError(f"periodic drive is unstable: Floquet multiplier {radius:.8g}",
                             eigenvalue=radius)
    rate = -np.log(radius) / P
    n = int(max(min_periods, np.ceil(10.0 / (rate * P))))
    Pn, Qn = _power(mono, n - 1)
    V0 = system.initial_covariance()
    Vprev = Pn @ V0 @ Pn.T + Qn
    Vlast = mono[0] @ Vprev @ mono[0].T + mono[1]
    Ph = np.stack([p[0] for p in partial])
    Qh = np.stack([p[1] for p in partial])

    def over_period(Vs):
        out = Ph @ Vs @ np.swapaxes(Ph, -1, -2) + Qh
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    prev = over_period(Vprev)
    last = over_period(Vlast)
    e_prev = np.maximum(_mirror_atom_negativity(prev), 0.0)
    e_last = np.maximum(_mirror_atom_negativity(last), 0.0)
    change = float(abs(e_last.max() - e_prev.max()))
    if change > PERIODICITY_TOL:
        raise ConvergenceError(f"long-time trace not periodic: successive maxima differ "
                               f"by {change:.3g}")
    return PeriodicState(times=t, covariances=last, e_ma=e_last, floquet_radius=radius,
                         transient_periods=n, period_change=change)


def floquet_fixed_point(params, modulation: Modulation, steps: int = PERIOD_STEPS,
                        follow: str = "fixed_detuning") -> np.ndarray:
    """Periodic covariance at ``t = 0 mod period`` from the discrete Lyapunov
    equation ``V = Phi V Phi^T + Q`` of the one-period map."""
    system = ControlSystem.from_params(params, follow)
    P = modulation.period
    t = np.linspace(0.0, P, steps + 1)
    h = np.diff(t)
    Phi, Q = step_maps(system.drift(modulation.eta(t[:-1] + h / 2)), system.D, h)
    mono = (np.eye(6), np.zeros((6, 6)))
    for i in range(steps):
        mono = _compose(mono, (Phi[i], Q[i]))
    return gc.symmetrize(sla.solve_discrete_lyapunov(mono[0], mono[1]))


def long_time_max(params, modulation: Modulation, steps: int = PERIOD_STEPS) -> float:
    """Maximum E_MA over one post-transient period."""
    return periodic_state(params, modulation, steps).max_e_ma


def scan_monochromatic(params, sigma_grid, steps: int = PERIOD_STEPS,
                       amplitude: float = 1.0):
    """Long-time max E_MA of the monochromatic drive for each ``Sigma``.

    Unstable frequencies are reported as ``nan`` and skipped by the argmax.

    Returns
    -------
    (sigma_star, values)
    """
    system = ControlSystem.from_params(params)
    sig = np.asarray(sigma_grid, float)
    vals = np.full(sig.shape, np.nan)
    for i, s in enumerate(sig):
        mod = Modulation.monochromatic(system.eta0, s, amplitude)
        try:
            vals[i] = long_time_max(system, mod, steps)
        except StabilityError as err:
            log.info("Sigma = %.6g unstable: %s", s, err)
    if np.all(np.isnan(vals)):
        raise StabilityError("every scanned frequency is unstable")
    return float(sig[int(np.nanargmax(vals))]), vals


def _unit_ball(x):
    r = np.linalg.norm(x)
    return x / r if r > 1 else x


def _periodic_value(system, sigma, x, n_max, steps):
    mod = Modulation.periodic(system.eta0, sigma, x[:n_max], x[n_max:])
    return long_time_max(system, mod, steps)


def robust_score(values, margin: Optional[float] = None,
                 max_drop: Optional[float] = None) -> float:
    """Score of ``values = [E, E_0.9, E_1.1, ...]`` under the robust objectives.

    Plain ``E`` without options; ``min(E, E_k / (1 - margin))`` with a
    margin; ``E - DROP_PENALTY * max(0, (1 - max_drop) E - min E_k)`` with
    a drop ceiling, which equals ``E`` whenever the ceiling is met.
    """
    nominal, variants = values[0], list(values[1:])
    if max_drop is not None:
        excess = max(0.0, (1 - max_drop) * nominal - min(variants))
        return nominal - DROP_PENALTY * excess
    if margin is not None:
        return min([nominal] + [v / (1 - margin) for v in variants])
    return nominal


def _periodic_restart(args):
    system, sigma, n_max, seed_seq, maxfev, steps, x0, margin, max_drop = args
    rng = np.random.default_rng(seed_seq)
    if x0 is None:
        x0 = _unit_ball(rng.normal(scale=0.5, size=2 * n_max))
    variants = [system]
    if margin is not None or max_drop is not None:
        variants += [system.with_coupling_scale(0.9), system.with_coupling_scale(1.1)]

    def objective(x):
        y = _unit_ball(x)
        vals = []
        for k, s in enumerate(variants):
            try:
                vals.append(_periodic_value(s, sigma, y, n_max, steps))
            except StabilityError as err:
                if k > 0:
                    # an unstable variant is a total loss of the objective
                    vals.append(0.0)
                    continue
                return 1.0 + float(err.eigenvalue if err.eigenvalue is not None else 1.0)
            except ConvergenceError:
                return 1.0
        return -robust_score(vals, margin, max_drop)

    res = minimize(objective, np.asarray(x0, float), method="Nelder-Mead",
                   options=dict(maxfev=maxfev, adaptive=True, xatol=1e-6, fatol=1e-9))
    y = _unit_ball(res.x)
    try:
        value = _periodic_value(system, sigma, y, n_max, steps)
    except (StabilityError, ConvergenceError):
        value = None
    score = None if value is None else -float(res.fun)
    return dict(start=np.asarray(x0).tolist(), value=value, score=score, nfev=int(res.nfev),
                coefficients=y.tolist())


def optimize_periodic(params, sigma_bar: float, n_max: int = 8, restarts: int = 24,
                      seed: int = 0, maxfev: int = 2000, steps: int = PERIOD_STEPS,
                      robust_margin: Optional[float] = None, starts: Sequence = (),
                      max_drop: Optional[float] = None,
                      workers: int = 1) -> OptimizationResult:
    """Maximise the long-time max E_MA over harmonic pump shapes.

    Coefficients ``(A_1..A_n, B_1..B_n)`` are projected onto the unit ball
    ``sum (A^2 + B^2) <= 1`` before each evaluation.  The first restart
    begins at the monochromatic drive, further explicit ``starts`` follow,
    the rest are random.

    Parameters
    ----------
    robust_margin : float, optional
        When given, the objective becomes
        ``min(E, E_-/(1 - m), E_+/(1 - m))`` with ``E_-+`` evaluated at
        coupling rates scaled by 0.9 and 1.1, which favours shapes that
        lose at most the fraction ``m`` under a 10% coupling error.
    max_drop : float, optional
        When given, maximise ``E`` subject to ``min(E_-, E_+) >= (1 - max_drop) E``
        through the penalty ``E - DROP_PENALTY * max(0, (1 - max_drop) E - min(E_-, E_+))``.
        Takes precedence over ``robust_margin``.  An unstable variant counts
        as ``E_-+ = 0``.
    """
    system = ControlSystem.from_params(params)
    if n_max < 1 or restarts < 1:
        raise ArgumentError("n_max and restarts must be >= 1")
    mono = np.zeros(2 * n_max)
    mono[0] = 1.0
    try:
        baseline = _periodic_value(system, sigma_bar, mono, n_max, steps)
    except StabilityError:
        baseline = float("nan")
    fixed = [mono] + [np.asarray(s, float) for s in starts]
    streams = np.random.SeedSequence(seed).spawn(restarts)
    jobs = [(system, sigma_bar, n_max, s, maxfev, steps,
             fixed[k] if k < len(fixed) else None, robust_margin, max_drop)
            for k, s in enumerate(streams)]
    records = _run_restarts(_periodic_restart, jobs, workers)
    for k, r in enumerate(records):
        log.info("periodic restart %d -> %s after %d evaluations", k, r["value"], r["nfev"])
    good = [r for r in records if r["value"] is not None]
    if not good:
        raise ConvergenceError("every periodic restart ended on an unstable drive")
    best = max(good, key=lambda r: r["score"])
    c = np.asarray(best["coefficients"])
    mod = Modulation.periodic(system.eta0, sigma_bar, c[:n_max], c[n_max:])
    return OptimizationResult(mod, best["value"], seed, records, baseline,
                              settings=dict(sigma_bar=sigma_bar, n_max=n_max, maxfev=maxfev,
                                            steps=steps, robust_margin=robust_margin,
                                            max_drop=max_drop))


# ---------------------------------------------------------------------------
# Robustness
# ---------------------------------------------------------------------------


def modulation_objective(params, modulation: Modulation, steps=None) -> float:
    """The quantity each modulation kind is optimised for."""
    system = ControlSystem.from_params(params)
    if modulation.kind == "harmonic_window":
        return short_time_value(system, modulation, steps or STEPS_PER_KAPPA)
    if modulation.kind in ("monochromatic", "periodic_harmonics"):
        return long_time_max(system, modulation, steps or PERIOD_STEPS)
    raise ArgumentError("robustness needs a windowed or periodic modulation")


def robustness_check(params, modulation: Modulation, imbalance: float = 0.1,
                     steps=None) -> dict:
    """Worst relative loss of the objective when ``chi`` is off by ``+-imbalance``.

    The condensate rate is left unchanged, so the mirror and atom couplings
    become unbalanced.  An unstable variant counts as a total loss.

    Returns
    -------
    dict
        ``nominal``, ``values`` (keyed by scale factor), ``drop``.
    """
    if not 0 <= imbalance < 1:
        raise ArgumentError("imbalance must lie in [0, 1)")
    system = ControlSystem.from_params(params)
    nominal = modulation_objective(system, modulation, steps)
    values = {}
    for f in (1 - imbalance, 1 + imbalance):
        try:
            values[f] = modulation_objective(system.with_coupling_scale(f), modulation, steps)
        except StabilityError:
            values[f] = 0.0
    if nominal <= 0:
        drop = 0.0
    else:
        drop = max(0.0, max((nominal - v) / nominal for v in values.values()))
    return dict(nominal=nominal, values={f"{k:.4g}": v for k, v in values.items()},
                drop=float(drop), imbalance=imbalance)
