"""Frequency-domain analysis of the mirror-cavity-condensate system.

Density noise spectra of the mirror position and of the Bogoliubov
quadrature, the effective mechanical susceptibility with its effective
frequency and damping, and the effective temperature obtained from the
area under the position spectrum.

Conventions
-----------
Spectra are symmetrized and two-sided, ``S(w) = int dt e^{iwt} <{O(t), O(0)}>/2``,
so that ``<O^2> = (1/2 pi) int_{-inf}^{inf} S(w) dw = (1/pi) int_0^inf S(w) dw``.
The position spectrum carries units of m^2 s; the atomic spectrum is
dimensionless times seconds.

Thermal force noise is either Markovian (``2 gamma m k_B T``, the default)
or frequency resolved (``hbar gamma m w coth(hbar w / 2 k_B T)``).  The
closed-form and the generic routes always use the same choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad

from . import gaussian_core as gc
from .errors import AccuracyError, ArgumentError, ModelError
from .models import (
    HBAR,
    KB,
    BecParams,
    CavityParams,
    MechanicalParams,
    build_three_mode,
    build_two_mode,
    mean_fields,
)

QUASI_STATIC_RATIO = 1e-6
"""Probe frequency, in units of omega_m, used for the "omega ~ 0" limit."""

CUTOFF_RATIO = 20.0
"""Upper limit of the explicit frequency integral, in units of omega_m."""


@dataclass(frozen=True)
class SpectrumCurve:
    """A sampled spectral density with the parameters that produced it."""

    frequencies: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        """Header lines ``# key = value`` then ``omega,value`` rows."""
        with open(path, "w") as fh:
            for k, v in self.metadata.items():
                fh.write(f"# {k} = {v}\n")
            fh.write("omega,value\n")
            for w, s in zip(self.frequencies, self.values):
                fh.write(f"{w:.17g},{s:.17g}\n")


@dataclass(frozen=True)
class EffectiveOscillator:
    omega_eff: float
    gamma_eff: float
    probe_frequency: float
    detuning: float


@dataclass(frozen=True)
class TemperatureEstimate:
    """Effective temperature with the pieces of its error budget."""

    kelvin: float
    quadrature_error: float
    tail: float

    @property
    def relative_error(self) -> float:
        return (self.quadrature_error + 0.5 * self.tail) / self.kelvin if self.kelvin else 0.0


# --------------------------------------------------------------------------
# operating point


@dataclass(frozen=True)
class _Point:
    mech: MechanicalParams
    cavity: CavityParams
    bec: Optional[BecParams]
    delta: float
    alpha: float
    chi: float
    kappa: float
    zeta: float
    omega_b: float


def _point(mech, cavity, bec=None, delta=None) -> _Point:
    if delta is not None:
        cavity = cavity.with_detuning(float(delta))
    mf = mean_fields(mech, cavity, bec)
    zeta = bec.zeta if bec is not None else 0.0
    omega_b = bec.omega_b if bec is not None else mech.omega_m
    return _Point(mech, cavity, bec, mf.delta, mf.alpha_s, cavity.chi_coefficient,
                  cavity.kappa, zeta, omega_b)


def _model(pt: _Point):
    """Two-mode model when the condensate is absent or decoupled."""
    if pt.bec is None or pt.zeta == 0:
        return build_two_mode(pt.mech, pt.cavity)
    return build_three_mode(pt.mech, pt.cavity, pt.bec)


def _require_stable(pt: _Point):
    model = _model(pt)
    gc.require_stable(model.K)
    return model


def _thermal_force(mech: MechanicalParams, omega, thermal: str):
    """Symmetrized Brownian force spectrum in N^2 s."""
    omega = np.asarray(omega, dtype=float)
    if thermal == "markov":
        return np.full_like(omega, 2 * mech.gamma * mech.mass * KB * mech.temperature)
    if thermal == "quantum":
        w = np.abs(omega)
        if mech.temperature == 0:
            return HBAR * mech.gamma * mech.mass * w
        x = HBAR * w / (2 * KB * mech.temperature)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(x > 1e-8, HBAR * mech.gamma * mech.mass * w / np.tanh(np.maximum(x, 1e-300)),
                           2 * mech.gamma * mech.mass * KB * mech.temperature)
        return val
    raise ArgumentError("thermal must be 'markov' or 'quantum'")


# --------------------------------------------------------------------------
# closed forms


def phi_function(omega, pt: _Point):
    """``phi(w, D) = 4 D a^2 zeta^2 w~ + [D^2 + (kappa - i w)^2](w^2 - w~^2)``."""
    w = np.asarray(omega, dtype=float)
    d, a, z, wb, k = pt.delta, pt.alpha, pt.zeta, pt.omega_b, pt.kappa
    return 4 * d * a**2 * z**2 * wb + (d**2 + (k - 1j * w) ** 2) * (w**2 - wb**2)


def d_mechanical(omega, pt: _Point):
    """``d_M(w) = 2 hbar D a^2 chi^2 (w^2 - w~^2) + m (w^2 - w_m^2 + i gamma w) phi``."""
    w = np.asarray(omega, dtype=float)
    m = pt.mech
    return (2 * HBAR * pt.delta * pt.alpha**2 * pt.chi**2 * (w**2 - pt.omega_b**2)
            + m.mass * (w**2 - m.omega_m**2 + 1j * m.gamma * w) * phi_function(w, pt))


def _ratio(omega, pt: _Point):
    """``r = (w^2 - w~^2) / phi``, regular at ``w = w~`` and at ``zeta = 0``."""
    w = np.asarray(omega, dtype=float)
    cav = pt.delta**2 + (pt.kappa - 1j * w) ** 2
    if pt.zeta == 0:
        return 1.0 / cav
    u = w**2 - pt.omega_b**2
    return u / (4 * pt.delta * pt.alpha**2 * pt.zeta**2 * pt.omega_b + cav * u)


def susceptibility(omega, pt: _Point):
    """Effective mechanical susceptibility ``phi / d_M`` (s^2/kg)."""
    w = np.asarray(omega, dtype=float)
    m = pt.mech
    return 1.0 / (m.mass * (w**2 - m.omega_m**2 + 1j * m.gamma * w)
                  + 2 * HBAR * pt.delta * pt.alpha**2 * pt.chi**2 * _ratio(w, pt))


def radiation_pressure_spectrum(omega, pt: _Point, form: str = "exact"):
    """Radiation-pressure force spectrum (N^2 s).

    ``form="exact"`` is the force noise actually transmitted through the
    cavity-condensate system, ``2 kappa hbar^2 chi^2 a^2 (D^2 + kappa^2 + w^2)
    |w^2 - w~^2|^2 / |phi|^2``.  ``form="printed"`` drops the condensate
    factor, ``... / |D^2 + (kappa - i w)^2|^2``; the two agree at ``zeta = 0``.
    """
    w = np.asarray(omega, dtype=float)
    pref = 2 * pt.kappa * HBAR**2 * pt.chi**2 * pt.alpha**2 * (pt.delta**2 + pt.kappa**2 + w**2)
    if form == "exact":
        return pref * np.abs(_ratio(w, pt)) ** 2
    if form == "printed":
        d, k = pt.delta, pt.kappa
        return pref / (d**4 + 2 * d**2 * (k**2 - w**2) + (k**2 + w**2) ** 2)
    raise ArgumentError("form must be 'exact' or 'printed'")


def _sq_closed(omega, pt: _Point, thermal="markov", srp_form="exact"):
    w = np.asarray(omega, dtype=float)
    return np.abs(susceptibility(w, pt)) ** 2 * (
        radiation_pressure_spectrum(w, pt, srp_form) + _thermal_force(pt.mech, w, thermal))


# --------------------------------------------------------------------------
# generic route


def _generic_matrix(model, omega, pt: _Point, thermal: str):
    """``S(w) = M D(w) M^dagger`` with ``M = (K + i w)^-1`` for every ``w``."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    K = model.K
    n = K.shape[0]
    M = np.linalg.inv(K[None, :, :] + 1j * w[:, None, None] * np.eye(n)[None, :, :])
    mech = pt.mech
    unit = HBAR * mech.mass * mech.omega_m
    Dp = _thermal_force(mech, w, thermal) / unit
    D = np.broadcast_to(model.D, (len(w), n, n)).copy()
    D[:, 1, 1] = Dp
    return np.einsum("wij,wjk,wlk->wil", M, D, M.conj()).real


def spectrum_generic(mech, cavity, bec=None, omega=None, delta=None, index=0,
                     thermal="markov", check_stable=True):
    """Symmetrized spectrum of canonical quadrature ``index`` (dimensionless s)."""
    pt = _point(mech, cavity, bec, delta)
    model = _require_stable(pt) if check_stable else _model(pt)
    if index >= model.K.shape[0]:
        return np.zeros(np.shape(omega))
    S = _generic_matrix(model, omega, pt, thermal)
    return S[:, index, index].reshape(np.shape(omega))


# --------------------------------------------------------------------------
# public spectra


def dns_mechanical(mech: MechanicalParams, cavity: CavityParams, bec: Optional[BecParams],
                   omega_grid, delta: Optional[float] = None, thermal: str = "markov",
                   srp_form: str = "exact", route: str = "closed",
                   cross_check: bool = False, rtol: float = 1e-6) -> SpectrumCurve:
    """Position noise spectrum ``S_q(w, D) = |phi/d_M|^2 [S_rp + S_th]`` (m^2 s).

    Parameters
    ----------
    delta : float, optional
        Total cavity detuning (rad/s); defaults to the cavity's own.
    srp_form : {"exact", "printed"}
        See :func:`radiation_pressure_spectrum`.
    route : {"closed", "generic"}
        Closed form or frequency-domain solve of the Langevin system.
    cross_check : bool
        Evaluate both routes and raise :class:`AccuracyError` if they differ
        by more than ``rtol`` relative anywhere on the grid.

    Raises
    ------
    StabilityError
        if the linearised model is unstable at this detuning.
    """
    w = np.asarray(omega_grid, dtype=float)
    pt = _point(mech, cavity, bec, delta)
    _require_stable(pt)
    closed = _sq_closed(w, pt, thermal, srp_form)
    if route == "closed":
        values = closed
    elif route == "generic":
        values = mech.length_unit**2 * spectrum_generic(mech, cavity, bec, w, pt.delta, 0,
                                                        thermal, check_stable=False)
    else:
        raise ArgumentError("route must be 'closed' or 'generic'")
    if cross_check:
        other = mech.length_unit**2 * spectrum_generic(mech, cavity, bec, w, pt.delta, 0,
                                                       thermal, check_stable=False)
        err = np.max(np.abs(closed - other) / np.maximum(np.abs(other), 1e-300))
        if err > rtol:
            raise AccuracyError(f"closed and generic spectra differ by {err:.3g} relative")
    return SpectrumCurve(w, np.maximum(values, 0.0), _metadata(pt, "S_q", "m^2 s", thermal))


def dns_atomic(mech: MechanicalParams, cavity: CavityParams, bec: Optional[BecParams],
               omega_grid, delta: Optional[float] = None, thermal: str = "markov") -> SpectrumCurve:
    """Spectrum of the Bogoliubov position-like quadrature (dimensionless s).

    Only the generic route is available.  A decoupled condensate
    (``zeta = 0``) receives no noise and its spectrum is zero.
    """
    w = np.asarray(omega_grid, dtype=float)
    pt = _point(mech, cavity, bec, delta)
    _require_stable(pt)
    if bec is None or pt.zeta == 0:
        values = np.zeros_like(w)
    else:
        values = spectrum_generic(mech, cavity, bec, w, pt.delta, 4, thermal, check_stable=False)
    return SpectrumCurve(w, np.maximum(values, 0.0), _metadata(pt, "S_Q", "s", thermal))


def _metadata(pt: _Point, name, units, thermal):
    return dict(quantity=name, units=units, thermal=thermal, omega_m=pt.mech.omega_m,
                mass=pt.mech.mass, gamma=pt.mech.gamma, temperature=pt.mech.temperature,
                kappa=pt.kappa, delta=pt.delta, alpha_s=pt.alpha, chi=pt.chi,
                zeta=pt.zeta, omega_b=pt.omega_b)


# --------------------------------------------------------------------------
# effective oscillator


def mu_terms(omega, pt: _Point, form: str = "exact"):
    """``(mu_r, mu_i)`` in s^-2.

    ``form="exact"`` follows from equating the susceptibility with that of a
    damped oscillator; it carries an overall factor ``w`` in ``mu_i`` so
    that ``mu_i / w`` stays finite as ``w -> 0``.  ``form="printed"``
    omits that factor.
    """
    w = float(omega)
    pref = 2 * HBAR * pt.delta * pt.alpha**2 * pt.chi**2 / pt.mech.mass
    r = complex(_ratio(w, pt))
    mu_r = pref * r.real
    mu_i = pref * r.imag
    if form == "printed":
        if w == 0:
            raise ArgumentError("the printed mu_i has no finite w -> 0 limit")
        mu_i = mu_i / w
    elif form != "exact":
        raise ArgumentError("form must be 'exact' or 'printed'")
    return mu_r, mu_i


def effective_oscillator(mech: MechanicalParams, cavity: CavityParams, bec: Optional[BecParams],
                         probe_omega: float, delta: Optional[float] = None,
                         form: str = "exact") -> EffectiveOscillator:
    """Effective frequency ``sqrt(w_m^2 - mu_r)`` and damping ``gamma + mu_i / w``.

    ``probe_omega = 0`` is replaced by the quasi-static probe
    ``QUASI_STATIC_RATIO * omega_m``.

    Raises
    ------
    ModelError
        if ``w_m^2 < mu_r`` (imaginary effective frequency).
    """
    pt = _point(mech, cavity, bec, delta)
    w = float(probe_omega)
    if w == 0:
        w = QUASI_STATIC_RATIO * mech.omega_m
    if pt.zeta > 0 and w == pt.omega_b:
        raise ArgumentError("probe frequency coincides with the Bogoliubov frequency")
    mu_r, mu_i = mu_terms(w, pt, form)
    if mech.omega_m**2 < mu_r:
        raise ModelError("effective frequency is imaginary (w_m^2 < mu_r)")
    return EffectiveOscillator(omega_eff=float(np.sqrt(mech.omega_m**2 - mu_r)),
                               gamma_eff=float(mech.gamma + mu_i / w),
                               probe_frequency=w, detuning=pt.delta)


# --------------------------------------------------------------------------
# effective temperature


def _breakpoints(K, upper, omega_m):
    ev = np.linalg.eigvals(K)
    pts = [0.0, upper]
    for lam in ev:
        c = abs(lam.imag)
        wdt = max(abs(lam.real), 1e-12 * omega_m)
        for f in (0.0, 1, 3, 10, 30, 100, 1000):
            for s in (-1, 1):
                x = c + s * f * wdt
                if 0 < x < upper:
                    pts.append(x)
    return np.unique(pts)


def position_variance(mech, cavity, bec=None, delta=None, thermal="markov",
                      srp_form="exact", cutoff_ratio=CUTOFF_RATIO):
    """``<dq^2> = (1/pi) int_0^inf S_q`` with its quadrature error and tail (m^2)."""
    pt = _point(mech, cavity, bec, delta)
    model = _require_stable(pt)
    upper = cutoff_ratio * mech.omega_m
    pts = _breakpoints(model.K, upper, mech.omega_m)

    def f(x):
        return float(_sq_closed(x, pt, thermal, srp_form))

    total = 0.0
    err = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, e = quad(f, a, b, limit=200, epsrel=1e-8, epsabs=0.0)
        total += val
        err += e
    # power-law tail beyond the cutoff
    s1, s2 = f(upper), f(1.01 * upper)
    p = -np.log(s2 / s1) / np.log(1.01) if s1 > 0 and s2 > 0 else np.inf
    tail = s1 * upper / (p - 1) if p > 1 else np.inf
    if not np.isfinite(tail):
        raise AccuracyError("position spectrum does not decay fast enough for a finite tail")
    return (total + tail) / np.pi, err / np.pi, tail / np.pi


def effective_temperature(mech: MechanicalParams, cavity: CavityParams,
                          bec: Optional[BecParams] = None, delta: Optional[float] = None,
                          thermal: str = "markov", srp_form: str = "exact",
                          cutoff_ratio: float = CUTOFF_RATIO, target: float = 0.01,
                          details: bool = False):
    """``T_eff = <U> / k_B`` from the area under the position spectrum.

    ``<U> = m w_m^2 <dq^2>/2 + <dp^2>/2m`` with ``S_p = m^2 w_m^2 S_q``,
    hence ``T_eff = m w_m^2 <dq^2> / k_B``.  The integral runs on
    ``[0, cutoff_ratio * w_m]`` with breakpoints at the system's
    resonances, plus a power-law tail.

    Returns
    -------
    float, or :class:`TemperatureEstimate` if ``details`` is true.

    Raises
    ------
    AccuracyError
        if the estimated relative error exceeds ``target``.
    """
    var, err, tail = position_variance(mech, cavity, bec, delta, thermal, srp_form, cutoff_ratio)
    scale = mech.mass * mech.omega_m**2 / KB
    est = TemperatureEstimate(kelvin=float(scale * var), quadrature_error=float(scale * err),
                              tail=float(scale * tail))
    if est.relative_error > target:
        raise AccuracyError(f"effective temperature error {est.relative_error:.3g} above target")
    return est if details else est.kelvin


def effective_temperature_lyapunov(mech, cavity, bec=None, delta=None) -> float:
    """Same quantity from the Markovian steady-state covariance,
    ``hbar w_m V_qq / k_B``; an independent check of the spectral route."""
    pt = _point(mech, cavity, bec, delta)
    model = _require_stable(pt)
    D = model.D.copy()
    D[1, 1] = 2 * mech.gamma * KB * mech.temperature / (HBAR * mech.omega_m)
    V = gc.solve_lyapunov(model.K, D)
    return float(HBAR * mech.omega_m * V[0, 0] / KB)
