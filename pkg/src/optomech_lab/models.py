"""Parameter records, mean fields and linearised drift/diffusion matrices.

Two systems are modelled:

* the optomechanical pair (mechanical mode M, cavity mode C);
* the hybrid triple (M, C and a Bogoliubov mode A of a condensate).

Canonical mode order is ``(M, C)`` and ``(M, C, A)``; every covariance and
drift matrix emitted here is in dimensionless quadratures with vacuum
variance 1/2 (see :mod:`optomech_lab.gaussian_core`).

The linearised three-mode dynamics are first assembled in the mixed
dimensional basis ``(x, y, q, p, Q, P)`` used for hand derivations, where
``x = a + a^dagger`` and ``y = -i(a - a^dagger)``, ``q`` and ``p`` are the
mirror position (m) and momentum (kg m/s), and ``(Q, P)`` are the
dimensionless Bogoliubov quadratures.  A diagonal similarity transform
then brings the matrix to the dimensionless canonical basis, where both
couplings take the symmetric form ``2 G alpha_s`` and ``2 zeta alpha_s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import constants as sc

from .errors import ArgumentError, ConvergenceError
from .gaussian_core import BasisPermutation

HBAR = sc.hbar
KB = sc.k
C_LIGHT = sc.c
MU_B = sc.physical_constants["Bohr magneton"][0]


def bose_occupation(omega: float, temperature: float) -> float:
    """Exact Bose-Einstein occupation ``1 / (exp(hbar w / k T) - 1)``."""
    if temperature <= 0:
        return 0.0
    x = HBAR * omega / (KB * temperature)
    return float(1.0 / np.expm1(x)) if x < 700 else 0.0


@dataclass(frozen=True)
class MechanicalParams:
    """Mechanical oscillator: frequency (rad/s), mass (kg), energy damping
    rate (1/s) and bath temperature (K)."""

    omega_m: float
    mass: float
    gamma: float
    temperature: float

    def __post_init__(self):
        for name in ("omega_m", "mass", "gamma"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name} must be strictly positive")
        if self.temperature < 0:
            raise ArgumentError("temperature must be non-negative")

    @classmethod
    def from_quality(cls, omega_m, mass, quality, temperature):
        return cls(omega_m, mass, omega_m / quality, temperature)

    @property
    def nbar(self) -> float:
        return bose_occupation(self.omega_m, self.temperature)

    @property
    def v_thermal(self) -> float:
        """``2 nbar + 1 = coth(hbar w / 2 k T)``."""
        return 2.0 * self.nbar + 1.0

    @property
    def length_unit(self) -> float:
        """``sqrt(hbar / m w)``: position of unit dimensionless quadrature."""
        return float(np.sqrt(HBAR / (self.mass * self.omega_m)))

    @property
    def momentum_unit(self) -> float:
        return float(np.sqrt(HBAR * self.mass * self.omega_m))

    @property
    def zero_point_width(self) -> float:
        """``sqrt(hbar / 2 m w)``."""
        return float(np.sqrt(HBAR / (2 * self.mass * self.omega_m)))


@dataclass(frozen=True)
class CavityParams:
    """Driven Fabry-Perot cavity.

    Exactly one of ``detuning`` (total effective detuning, held fixed) and
    ``bare_detuning`` (laser-cavity detuning before radiation-pressure
    shifts, total detuning solved self-consistently) should be given.

    ``chi`` is the optomechanical coefficient ``d omega_c / d q`` in
    1/(m s); it defaults to ``omega_c / length``.  ``kappa`` may be given
    directly, in which case the finesse is derived from it.
    """

    length: float
    pump_power: float
    pump_wavelength: Optional[float] = None
    finesse: Optional[float] = None
    kappa_override: Optional[float] = None
    omega_c: Optional[float] = None
    detuning: Optional[float] = None
    bare_detuning: Optional[float] = None
    chi: Optional[float] = None

    def __post_init__(self):
        if not self.length > 0:
            raise ArgumentError("cavity length must be positive")
        if self.pump_power < 0:
            raise ArgumentError("pump power must be non-negative")
        if (self.finesse is None) == (self.kappa_override is None):
            raise ArgumentError("give exactly one of finesse and kappa")
        if (self.detuning is None) == (self.bare_detuning is None):
            raise ArgumentError("give exactly one of detuning and bare_detuning")
        if self.pump_wavelength is None and self.omega_c is None:
            raise ArgumentError("give the pump wavelength or the cavity frequency")

    @property
    def kappa(self) -> float:
        """Amplitude decay rate ``pi c / (2 L F)`` (rad/s)."""
        if self.kappa_override is not None:
            return float(self.kappa_override)
        return float(np.pi * C_LIGHT / (2 * self.length * self.finesse))

    @property
    def finesse_value(self) -> float:
        return float(np.pi * C_LIGHT / (2 * self.length * self.kappa))

    @property
    def omega_laser(self) -> float:
        if self.pump_wavelength is None:
            return float(self.omega_c)
        return float(2 * np.pi * C_LIGHT / self.pump_wavelength)

    @property
    def omega_cavity(self) -> float:
        return float(self.omega_c if self.omega_c is not None else self.omega_laser)

    @property
    def eta(self) -> float:
        """Pump rate ``sqrt(2 kappa R / (hbar omega_L))`` (1/s)."""
        return float(np.sqrt(2 * self.kappa * self.pump_power / (HBAR * self.omega_laser)))

    @property
    def chi_coefficient(self) -> float:
        return float(self.chi if self.chi is not None else self.omega_cavity / self.length)

    def with_detuning(self, delta: float) -> "CavityParams":
        return replace(self, detuning=delta, bare_detuning=None)


@dataclass(frozen=True)
class BecParams:
    """Bogoliubov mode: frequency ``omega_b`` (rad/s) and cavity coupling
    ``zeta`` (rad/s).  ``frequency_pull`` is the static cavity shift
    ``g^2 N0 / 2 Delta_a`` (rad/s) added to the bare detuning."""

    omega_b: float
    zeta: float
    n_atoms: Optional[float] = None
    u0: Optional[float] = None
    frequency_pull: float = 0.0

    def __post_init__(self):
        if not self.omega_b > 0:
            raise ArgumentError("omega_b must be positive")
        if self.zeta < 0:
            raise ArgumentError("zeta must be non-negative")


def bogoliubov_amplitudes(epsilon_k: float, interaction: float):
    """Bogoliubov amplitudes ``(alpha_k, beta_k)``.

    ``mu_k^(+-) = sqrt((1/2)((eps_k + n0 g_B) / E_k +- 1))`` with
    ``E_k = sqrt(2 eps_k n0 g_B + eps_k^2)``.
    """
    if not epsilon_k > 0:
        raise ArgumentError("epsilon_k must be positive")
    if interaction < 0:
        raise ArgumentError("interaction energy n0 g_B must be non-negative")
    e_k = np.sqrt(2 * epsilon_k * interaction + epsilon_k**2)
    r = (epsilon_k + interaction) / e_k
    return float(np.sqrt(0.5 * (r + 1))), float(np.sqrt(max(0.5 * (r - 1), 0.0)))


def bogoliubov_coupling(u0: float, n_atoms: float, epsilon_k: float, interaction: float) -> float:
    """Cavity-Bogoliubov coupling ``zeta = U0 sqrt(2 N0) / 4 (alpha - beta)``."""
    if u0 < 0 or n_atoms < 0:
        raise ArgumentError("u0 and n_atoms must be non-negative")
    a, b = bogoliubov_amplitudes(epsilon_k, interaction)
    return float(u0 * np.sqrt(2 * n_atoms) / 4 * (a - b))


def optomechanical_rate(mech: MechanicalParams, cavity: CavityParams) -> float:
    """Single-photon rate ``G = chi sqrt(hbar / 2 m w_m)`` (1/s)."""
    return cavity.chi_coefficient * mech.zero_point_width


def chi_for_rate(rate: float, mech: MechanicalParams) -> float:
    """Inverse of :func:`optomechanical_rate`: ``chi`` giving ``G = rate``."""
    return rate / mech.zero_point_width


@dataclass(frozen=True)
class MeanFields:
    """Stationary classical solution of the driven nonlinear equations."""

    delta: float
    alpha_s: float
    q_s: float
    Q_s: float
    branch: str
    bare_delta: float


def _shift_coefficient(mech, cavity, bec):
    """``s`` in ``Delta = Delta_0' - s alpha_s^2``."""
    chi = cavity.chi_coefficient
    s = HBAR * chi**2 / (mech.mass * mech.omega_m**2)
    if bec is not None:
        s += 2 * bec.zeta**2 / bec.omega_b
    return s


def mean_fields(mech: MechanicalParams, cavity: CavityParams,
                bec: Optional[BecParams] = None, eta: Optional[float] = None) -> MeanFields:
    """Self-consistent stationary values ``(Delta, alpha_s, q_s, Q_s)``.

    With ``q_s = hbar chi alpha_s^2 / m w_m^2`` and
    ``Q_s = -sqrt(2) zeta alpha_s^2 / w_b`` the total detuning is
    ``Delta = Delta_0' - s n`` with ``n = alpha_s^2`` and
    ``s = hbar chi^2 / m w_m^2 + 2 zeta^2 / w_b``.  Combined with
    ``n (Delta^2 + kappa^2) = eta^2`` this is a cubic in ``n``; the smallest
    non-negative real root is the branch reached by raising the pump from
    zero.  When the cavity carries a fixed total detuning the relation is
    explicit and the bare detuning is reported instead.

    Parameters
    ----------
    eta : float, optional
        Pump rate overriding ``cavity.eta`` (used for modulated drives).
    """
    eta = cavity.eta if eta is None else float(eta)
    if eta < 0:
        raise ArgumentError("pump rate must be non-negative")
    kappa = cavity.kappa
    chi = cavity.chi_coefficient
    s = _shift_coefficient(mech, cavity, bec)
    pull = bec.frequency_pull if bec is not None else 0.0
    zeta = bec.zeta if bec is not None else 0.0
    omega_b = bec.omega_b if bec is not None else 1.0

    if cavity.detuning is not None:
        delta = float(cavity.detuning)
        n = eta**2 / (delta**2 + kappa**2)
        bare = delta + s * n - pull
        branch = "monostable"
    else:
        bare = float(cavity.bare_detuning)
        d0 = bare + pull
        n, branch = _solve_intensity(s, d0, kappa, eta)
        delta = d0 - s * n
    alpha = float(np.sqrt(n))
    q_s = HBAR * chi * n / (mech.mass * mech.omega_m**2)
    Q_s = -np.sqrt(2) * zeta * n / omega_b
    return MeanFields(delta=float(delta), alpha_s=alpha, q_s=float(q_s), Q_s=float(Q_s),
                      branch=branch, bare_delta=float(bare))


def _solve_intensity(s, d0, kappa, eta, maxiter=10_000):
    """Smallest non-negative root of ``n ((d0 - s n)^2 + kappa^2) = eta^2``."""
    if eta == 0:
        return 0.0, "monostable"
    if s == 0:
        return eta**2 / (d0**2 + kappa**2), "monostable"
    coeffs = [s**2, -2 * d0 * s, d0**2 + kappa**2, -eta**2]
    roots = np.roots(coeffs)
    scale = max(np.abs(roots).max(), 1e-300)
    real = np.sort(roots[np.abs(roots.imag) <= 1e-7 * scale].real)
    real = real[real >= 0]
    if len(real) == 0:
        raise ConvergenceError("no real non-negative intensity root")
    n = real[0]

    def f(x):
        return x * ((d0 - s * x) ** 2 + kappa**2) - eta**2

    def fp(x):
        return (d0 - s * x) ** 2 + kappa**2 - 2 * s * x * (d0 - s * x)

    for _ in range(maxiter):
        step = f(n) / fp(n)
        n -= step
        if abs(step) <= 1e-15 * max(abs(n), 1e-300):
            break
    else:
        raise ConvergenceError("Newton polish of the intensity root did not converge")
    if len(real) >= 3:
        branch = "bistable_low"
    else:
        # folds of f exist when its derivative has two real positive roots;
        # a single root above the upper fold sits on the high branch
        folds = np.roots([3 * s**2, -4 * d0 * s, d0**2 + kappa**2])
        folds = np.sort(folds[np.abs(folds.imag) <= 1e-12 * np.abs(folds).max()].real)
        branch = "bistable_high" if len(folds) == 2 and n > folds[1] else "monostable"
    return float(n), branch


def mean_field_residuals(mech, cavity, bec, mf: MeanFields, eta=None):
    """Relative residuals of the defining relations, for verification."""
    eta = cavity.eta if eta is None else eta
    kappa = cavity.kappa
    chi = cavity.chi_coefficient
    zeta = bec.zeta if bec is not None else 0.0
    pull = bec.frequency_pull if bec is not None else 0.0
    r_alpha = abs(mf.alpha_s - eta / np.hypot(mf.delta, kappa)) / max(mf.alpha_s, 1e-300)
    delta_rhs = mf.bare_delta + pull - chi * mf.q_s + np.sqrt(2) * zeta * mf.Q_s
    r_delta = abs(mf.delta - delta_rhs) / max(abs(mf.delta), kappa)
    return float(r_alpha), float(r_delta)


@dataclass(frozen=True)
class SystemModel:
    """Drift ``K`` and diffusion ``D`` in the canonical dimensionless basis."""

    K: np.ndarray
    D: np.ndarray
    basis: BasisPermutation
    modes: tuple
    constants: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return self.K.shape[0] // 2


TWO_MODE_LABELS = ("q", "p", "x", "y")
THREE_MODE_PRINTED = ("x", "y", "q", "p", "Q", "P")
THREE_MODE_CANONICAL = ("q", "p", "x", "y", "Q", "P")


def two_mode_drift(omega_m, gamma, kappa, delta, g_eff) -> np.ndarray:
    """Drift of the (M, C) pair, rows ``q, p, x, y``."""
    return np.array([
        [0.0, omega_m, 0.0, 0.0],
        [-omega_m, -gamma, g_eff, 0.0],
        [0.0, 0.0, -kappa, delta],
        [g_eff, 0.0, -delta, -kappa],
    ])


def build_two_mode(mech: MechanicalParams, cavity: CavityParams,
                   mf: Optional[MeanFields] = None) -> SystemModel:
    """Linearised optomechanical pair.

    The coupling entry is the pump-enhanced rate ``G_eff = 2 G alpha_s``
    with ``G = chi sqrt(hbar / 2 m w_m)``; it coincides with the
    ``zeta -> 0`` limit of :func:`build_three_mode`.
    """
    if mf is None:
        mf = mean_fields(mech, cavity)
    G = optomechanical_rate(mech, cavity)
    g_eff = 2 * G * mf.alpha_s
    kappa = cavity.kappa
    K = two_mode_drift(mech.omega_m, mech.gamma, kappa, mf.delta, g_eff)
    D = np.diag([0.0, mech.gamma * mech.v_thermal, kappa, kappa])
    consts = dict(G=G, G_eff=g_eff, kappa=kappa, eta=cavity.eta, nbar=mech.nbar,
                  delta=mf.delta, alpha_s=mf.alpha_s)
    return SystemModel(K=K, D=D, basis=BasisPermutation.identity(4, TWO_MODE_LABELS),
                       modes=("M", "C"), constants=consts)


def printed_three_mode_drift(mech: MechanicalParams, cavity: CavityParams,
                             bec: BecParams, mf: MeanFields) -> np.ndarray:
    """Three-mode drift in the mixed basis ``(x, y, q, p, Q, P)``.

    Here ``x = a + a^dagger``, ``y = -i(a - a^dagger)``, ``q`` in metres
    and ``p`` in kg m/s.
    """
    a = mf.alpha_s
    chi = cavity.chi_coefficient
    z = bec.zeta
    wb = bec.omega_b
    m = mech.mass
    k = cavity.kappa
    d = mf.delta
    r2 = np.sqrt(2.0)
    return np.array([
        [-k, d, 0, 0, 0, 0],
        [-d, -k, 2 * chi * a, 0, -2 * r2 * z * a, 0],
        [0, 0, 0, 1 / m, 0, 0],
        [HBAR * chi * a, 0, -m * mech.omega_m**2, -mech.gamma, 0, 0],
        [0, 0, 0, 0, 0, wb],
        [-r2 * z * a, 0, 0, 0, -wb, 0],
    ])


def printed_basis_scales(mech: MechanicalParams) -> np.ndarray:
    """Diagonal of ``S`` with ``u_printed = S u_dimensionless``."""
    r2 = np.sqrt(2.0)
    return np.array([r2, r2, mech.length_unit, mech.momentum_unit, 1.0, 1.0])


def build_three_mode(mech: MechanicalParams, cavity: CavityParams, bec: BecParams,
                     mf: Optional[MeanFields] = None) -> SystemModel:
    """Linearised mirror-cavity-condensate triple in canonical order (M, C, A).

    The mixed-basis drift of :func:`printed_three_mode_drift` is rescaled
    to dimensionless quadratures and permuted to canonical order. The
    Bogoliubov pair has no damping and no diffusion.
    """
    if mf is None:
        mf = mean_fields(mech, cavity, bec)
    S = printed_basis_scales(mech)
    Kp = printed_three_mode_drift(mech, cavity, bec, mf)
    Kd = (Kp * S[None, :]) / S[:, None]
    perm = BasisPermutation.from_labels(THREE_MODE_PRINTED, THREE_MODE_CANONICAL)
    K = perm.apply_matrix(Kd)
    kappa = cavity.kappa
    D = np.diag([0.0, mech.gamma * mech.v_thermal, kappa, kappa, 0.0, 0.0])
    G = optomechanical_rate(mech, cavity)
    consts = dict(G=G, G_eff=2 * G * mf.alpha_s, zeta=bec.zeta,
                  zeta_eff=2 * bec.zeta * mf.alpha_s, kappa=kappa, eta=cavity.eta,
                  nbar=mech.nbar, delta=mf.delta, alpha_s=mf.alpha_s)
    return SystemModel(K=K, D=D, basis=perm, modes=("M", "C", "A"), constants=consts)
