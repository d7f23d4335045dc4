"""Spinor-condensate rotor as a probe of cantilever coherences.

A cantilever with a magnetic tip adds a field ``G_c q`` along x to the
static field ``B_z0`` seen by an F = 1 condensate mapped onto a quantum
rotor.  For a cantilever position ``q`` the rotor precesses about the
total field, so the x angular momentum at time ``t`` is

    L_x(t) = a1(q, t) L_x0 + a2(q, t) L_y0 + a3(q, t) L_z0,

and the expectation value follows by averaging the coefficients over
the cantilever's position distribution, including the coherences
between its energy eigenstates:

    A_j(t) = sum_{n,p} rho_{np} exp(-i w_m (n - p) t) int phi_p phi_n a_j dq.

Position integrals use Gauss-Hermite quadrature in ``x = q / (sqrt(2) a_c)``,
where ``phi_p(q) phi_n(q) dq = psi_p(x) psi_n(x) dx`` with the normalised
Hermite functions ``psi_n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.constants import hbar as HBAR
from scipy.constants import physical_constants
from scipy.special import gammaln, roots_hermite

from .errors import AccuracyError, ArgumentError, CutoffError

MU_B = physical_constants["Bohr magneton"][0]

#: Default Gauss-Hermite order.
QUAD_ORDER = 80
#: Tail mass allowed in the top two Fock levels of a truncated state.
TAIL_TOL = 1e-8


@dataclass(frozen=True)
class ProbeParams:
    """Field and cantilever parameters.

    Parameters
    ----------
    b_z0 : float
        Static field (T).
    grad : float
        Tip field gradient ``G_c`` (T/m).
    g_factor : float
        Gyromagnetic factor (positive by convention here).
    a_c : float, optional
        Zero-point width ``sqrt(hbar / 2 m w_m)`` (m).  Derived from
        ``mass`` when that is given instead.
    omega_m : float
        Cantilever angular frequency (rad/s).
    mass : float, optional
        Cantilever effective mass (kg).
    c_a : float
        Rotor ``L^2`` coefficient; it commutes with every component of
        ``L`` and does not enter ``<L_x(t)>``.  Kept as metadata.
    """

    b_z0: float
    grad: float
    omega_m: float
    a_c: Optional[float] = None
    g_factor: float = 0.5
    mass: Optional[float] = None
    c_a: float = 0.0

    def __post_init__(self):
        if not self.b_z0 > 0 or not self.g_factor > 0:
            raise ArgumentError("the Larmor frequency g mu_B B_z0 / hbar must be positive")
        if not self.omega_m > 0:
            raise ArgumentError("omega_m must be positive")
        width = None if self.mass is None else np.sqrt(HBAR / (2 * self.mass * self.omega_m))
        if self.a_c is None:
            if width is None:
                raise ArgumentError("give the zero-point width a_c or the mass")
            object.__setattr__(self, "a_c", float(width))
        elif width is not None and not np.isclose(self.a_c, width, rtol=1e-9, atol=0.0):
            raise ArgumentError(f"a_c = {self.a_c:.6g} m inconsistent with the mass "
                                f"(expected {width:.6g} m)")
        if not self.a_c > 0:
            raise ArgumentError("a_c must be positive")

    @property
    def gyro(self) -> float:
        """``g mu_B / hbar`` in rad/(s T)."""
        return self.g_factor * MU_B / HBAR

    @property
    def omega_larmor(self) -> float:
        return self.gyro * self.b_z0

    @property
    def coupling_ratio(self) -> float:
        """``G_c a_c / B_z0``; the carrier stays near ``w_L`` when this is small."""
        return self.grad * self.a_c / self.b_z0


def default_probe(ratio: float = 0.05, omega_ratio: float = 0.25, g_factor: float = 0.5):
    """Reference probe: ``B_z0 = 3e-6 uT``, ``G_c = 1.8e3 uT/um``.

    The cantilever frequency and zero-point width are not fixed by the
    field values; they default to ``w_m = 0.25 w_L`` and
    ``G_c a_c = 0.05 B_z0``.
    """
    b = 3e-12
    grad = 1.8e3
    w_l = g_factor * MU_B * b / HBAR
    return ProbeParams(b_z0=b, grad=grad, omega_m=omega_ratio * w_l,
                       a_c=ratio * b / grad, g_factor=g_factor)


@dataclass(frozen=True)
class RotorInitial:
    """Initial rotor angular momentum ``(L_x0, L_y0, L_z0)`` for ``n_atoms`` atoms."""

    l_x0: float = 0.0
    l_y0: float = 0.0
    l_z0: float = 100.0
    n_atoms: int = 1000

    def __post_init__(self):
        if np.linalg.norm(self.vector) > self.n_atoms * (1 + 1e-12):
            raise ArgumentError("|L0| cannot exceed the atom number")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.l_x0, self.l_y0, self.l_z0], float)


@dataclass(frozen=True)
class CantileverState:
    """Cantilever density matrix in the Fock basis with its origin recorded."""

    rho: np.ndarray
    representation: str
    tail_mass: float = 0.0

    @property
    def cutoff(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def pure(cls, coefficients, tol: float = 1e-10) -> "CantileverState":
        c = np.asarray(coefficients, complex)
        norm = np.sum(np.abs(c) ** 2)
        if abs(norm - 1) > tol:
            raise ArgumentError(f"coefficients not normalised: sum |C_n|^2 = {norm:.12g}")
        # explicit coefficients are exact: there is no truncated tail
        return cls(np.outer(c, c.conj()), "pure_coefficients", 0.0)

    @classmethod
    def density(cls, rho, tol: float = 1e-10) -> "CantileverState":
        rho = np.asarray(rho, complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ArgumentError("density matrix must be square")
        if np.abs(rho - rho.conj().T).max() > tol:
            raise ArgumentError("density matrix must be Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1) > tol:
            raise ArgumentError(f"density matrix trace {tr:.12g} differs from 1")
        return cls(rho, "density_matrix", 0.0)

    @classmethod
    def thermal(cls, nbar: float, cutoff: Optional[int] = None) -> "CantileverState":
        if nbar < 0:
            raise ArgumentError("nbar must be non-negative")
        if cutoff is None:
            cutoff = int(np.ceil(np.log(TAIL_TOL / 10) / np.log(nbar / (nbar + 1)))) + 2 \
                if nbar > 0 else 2
        n = np.arange(cutoff)
        p = (nbar / (nbar + 1)) ** n / (nbar + 1) if nbar > 0 else (n == 0).astype(float)
        tail = 1 - p.sum() + p[-2:].sum()
        if tail > TAIL_TOL:
            raise CutoffError(f"thermal tail mass {tail:.3g} above {TAIL_TOL:.0e}; "
                              "raise the cutoff")
        p = p / p.sum()
        return cls(np.diag(p).astype(complex), "thermal", float(tail))


def _tail(c):
    return float(np.sum(np.abs(c[-2:]) ** 2))


def _coherent_amplitudes(alpha, cutoff):
    """Truncated amplitudes and the mass in (top two levels + beyond)."""
    n = np.arange(cutoff)
    if alpha == 0:
        c = (n == 0).astype(complex)
    else:
        logc = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1) - abs(alpha) ** 2 / 2
        c = np.exp(logc) * np.exp(1j * n * np.angle(alpha))
    tail = 1 - np.sum(np.abs(c) ** 2) + _tail(c)
    return c, float(max(tail, 0.0))


def coherent_coefficients(alpha: complex, cutoff: Optional[int] = None) -> CantileverState:
    """Coherent state truncated to ``cutoff`` levels and renormalised.

    Raises
    ------
    CutoffError
        if ``cutoff < |alpha|^2 + 8 sqrt(|alpha|^2 + 1)`` or the tail mass
        beyond the truncation exceeds ``TAIL_TOL``.
    """
    n2 = abs(alpha) ** 2
    need = int(np.ceil(n2 + 8 * np.sqrt(n2 + 1)))
    auto = cutoff is None
    if auto:
        cutoff = need
    if cutoff < need:
        raise CutoffError(f"cutoff {cutoff} below the required {need} for |alpha|^2 = {n2:.4g}")
    while True:
        c, tail = _coherent_amplitudes(alpha, cutoff)
        if tail <= TAIL_TOL / 10 or not auto:
            break
        cutoff += 4
    if tail > TAIL_TOL:
        raise CutoffError(f"coherent tail mass {tail:.3g} above {TAIL_TOL:.0e}")
    c = c / np.linalg.norm(c)
    return CantileverState(np.outer(c, c.conj()), "coherent", float(tail))


# ---------------------------------------------------------------------------
# Gyroscopic coefficients
# ---------------------------------------------------------------------------


def gyro_coefficients(q, t, probe: ProbeParams):
    """``(a1, a2, a3)`` of the precessing x angular momentum.

    ``q`` (m) and ``t`` (s) broadcast against each other.
    """
    q = np.asarray(q, float)
    t = np.asarray(t, float)
    g = probe.gyro
    b = probe.b_z0
    gq = probe.grad * q
    omega = g * np.sqrt(b**2 + gq**2)
    ph = omega * t
    w2 = (g / omega) ** 2
    a1 = w2 * (b**2 * np.cos(ph) + gq**2)
    a2 = g * b / omega * np.sin(ph)
    a3 = w2 * b * gq * (1 - np.cos(ph))
    return a1, a2, a3


@lru_cache(maxsize=16)
def _hermite_table(order: int, dim: int):
    """Nodes, weights times ``exp(x^2)`` and ``psi_n(x_k)`` for ``n < dim``."""
    x, w = roots_hermite(order)
    psi = np.empty((dim, order))
    psi[0] = np.pi ** -0.25 * np.exp(-x**2 / 2)
    if dim > 1:
        psi[1] = np.sqrt(2.0) * x * psi[0]
    for n in range(1, dim - 1):
        psi[n + 1] = np.sqrt(2.0 / (n + 1)) * x * psi[n] - np.sqrt(n / (n + 1)) * psi[n - 1]
    return x, w * np.exp(x**2), psi


def hermite_functions(x, dim: int) -> np.ndarray:
    """``psi_n(x)`` for ``n < dim`` by the normalised three-term recurrence."""
    x = np.asarray(x, float)
    psi = np.empty((dim,) + x.shape)
    psi[0] = np.pi ** -0.25 * np.exp(-x**2 / 2)
    if dim > 1:
        psi[1] = np.sqrt(2.0) * x * psi[0]
    for n in range(1, dim - 1):
        psi[n + 1] = np.sqrt(2.0 / (n + 1)) * x * psi[n] - np.sqrt(n / (n + 1)) * psi[n - 1]
    return psi


def _weights_on_nodes(state: CantileverState, omega_m, t, psi):
    """``F_k(t) = sum_{n,p} rho_np e^{-i w_m (n-p) t} psi_n(x_k) psi_p(x_k)``.

    Evaluated through the eigen-decomposition of ``rho`` so every term is a
    squared modulus.  Returns an array of shape ``(len(t), order)``.
    """
    lam, vec = np.linalg.eigh(state.rho)
    keep = lam > 1e-15 * lam.max()
    lam, vec = lam[keep], vec[:, keep]
    dim = state.cutoff
    phase = np.exp(-1j * omega_m * np.outer(t, np.arange(dim)))
    out = np.zeros((len(t), psi.shape[1]))
    for l, v in zip(lam, vec.T):
        z = (phase * v[None, :]) @ psi
        out += l * np.abs(z) ** 2
    return out


def coefficient_averages(state: CantileverState, probe: ProbeParams, t_grid,
                         order: int = QUAD_ORDER) -> np.ndarray:
    """``(A_1, A_2, A_3)(t)`` with shape ``(len(t), 3)``."""
    t = np.atleast_1d(np.asarray(t_grid, float))
    x, w, psi = _hermite_table(order, state.cutoff)
    q = np.sqrt(2.0) * probe.a_c * x
    F = _weights_on_nodes(state, probe.omega_m, t, psi) * w[None, :]
    a1, a2, a3 = gyro_coefficients(q[None, :], t[:, None], probe)
    return np.stack([(F * a1).sum(1), (F * a2).sum(1), (F * a3).sum(1)], axis=1)


def coefficient_averages_direct(state: CantileverState, probe: ProbeParams, t_grid,
                                order: int = QUAD_ORDER) -> np.ndarray:
    """Complex ``A_j(t)`` from the explicit double sum over ``(n, p)``.

    Slower reference route; its imaginary part measures the Hermiticity
    residue of the state and quadrature.
    """
    t = np.atleast_1d(np.asarray(t_grid, float))
    x, w, psi = _hermite_table(order, state.cutoff)
    q = np.sqrt(2.0) * probe.a_c * x
    n = np.arange(state.cutoff)
    out = np.empty((len(t), 3), complex)
    for i, s in enumerate(t):
        coeffs = gyro_coefficients(q, s, probe)
        ph = np.exp(-1j * probe.omega_m * np.subtract.outer(n, n) * s)
        for j, a in enumerate(coeffs):
            I = (psi * (w * a)) @ psi.T
            out[i, j] = np.sum(state.rho * ph * I)
    return out


@dataclass(frozen=True)
class LxTrace:
    times: np.ndarray
    lx: np.ndarray
    imag_residue: float
    quadrature_change: float

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.times, self.lx]), delimiter=",",
                   header="t_s,Lx", comments="", fmt="%.17g")


def lx_expectation(state: CantileverState, rotor: RotorInitial, probe: ProbeParams,
                   t_grid=None, order: int = QUAD_ORDER, check: bool = True,
                   tail_tol: float = TAIL_TOL) -> LxTrace:
    """``<L_x(t)> = sum_j A_j(t) L_j0``.

    Parameters
    ----------
    t_grid : array, optional
        Defaults to 4096 points over ten Larmor periods.
    check : bool
        Repeat the quadrature at twice the order on a subset of times and
        evaluate the direct double sum at a few times.

    Raises
    ------
    CutoffError
        if the state's tail mass exceeds ``tail_tol``.
    AccuracyError
        if doubling the quadrature order moves the result by more than
        ``1e-8`` relative to ``|L0|``.
    """
    if state.tail_mass > tail_tol:
        raise CutoffError(f"cantilever tail mass {state.tail_mass:.3g} above {tail_tol:.0e}")
    if t_grid is None:
        t_grid = default_time_grid(probe)
    t = np.asarray(t_grid, float)
    L0 = rotor.vector
    A = coefficient_averages(state, probe, t, order)
    lx = A @ L0
    scale = max(np.linalg.norm(L0), 1e-300)
    change = 0.0
    imag = 0.0
    if check:
        sub = t[:: max(1, len(t) // 32)]
        ref = coefficient_averages(state, probe, sub, 2 * order) @ L0
        change = float(np.max(np.abs(ref - A[:: max(1, len(t) // 32)] @ L0)) / scale)
        if change > 1e-8:
            raise AccuracyError(f"quadrature order {order} not converged: doubling changes "
                                f"<L_x> by {change:.3g} relative")
        few = t[:: max(1, len(t) // 4)][:4]
        imag = float(np.max(np.abs(coefficient_averages_direct(state, probe, few, order).imag
                                   @ L0)))
    return LxTrace(times=t, lx=lx, imag_residue=imag, quadrature_change=change)


def default_time_grid(probe: ProbeParams, periods: float = 10.0, points: int = 4096):
    return np.linspace(0.0, periods * 2 * np.pi / probe.omega_larmor, points)


# ---------------------------------------------------------------------------
# Envelope analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeSpectrum:
    omega: np.ndarray
    magnitude: np.ndarray
    envelope: np.ndarray

    def peak(self) -> float:
        """``|omega|`` of the strongest non-DC line."""
        mask = self.omega > 0
        m = np.where(mask, self.magnitude, -np.inf)
        return float(abs(self.omega[int(np.argmax(m))]))

    def amplitude(self) -> float:
        """Peak-to-peak half range of the (real) envelope."""
        e = self.envelope.real
        return float((e.max() - e.min()) / 2)

    def significant_lines(self, rel: float = 0.01) -> int:
        """Number of local maxima at ``omega > 0`` above ``rel`` times the largest."""
        pos = self.omega > 0
        w = self.omega[pos]
        m = self.magnitude[pos]
        if m.size < 3 or m.max() == 0:
            return 0
        inner = (m[1:-1] > m[:-2]) & (m[1:-1] >= m[2:]) & (m[1:-1] > rel * m.max())
        return int(inner.sum())

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.omega, self.magnitude]), delimiter=",",
                   header="omega_rad_per_s,magnitude", comments="", fmt="%.17g")


def envelope_spectrum(t, signal, carrier: float, band: Optional[float] = None,
                      window: bool = True) -> EnvelopeSpectrum:
    """Demodulate ``signal`` at ``carrier`` and return the baseband spectrum.

    The signal is multiplied by ``2 exp(-i carrier t)`` and every Fourier
    component with ``|omega| >= band`` (default ``carrier / 2``) is
    removed, giving the complex envelope.  The spectrum is the DFT of the
    demodulated signal, Hann-windowed before demodulation when ``window``
    is set so that the out-of-band lines do not leak into the band.
    """
    t = np.asarray(t, float)
    s = np.asarray(signal, float)
    dt = t[1] - t[0]
    band = carrier / 2 if band is None else band
    w = 2 * np.pi * np.fft.fftfreq(len(t), dt)
    lo = np.exp(-1j * carrier * t)
    Z = np.fft.fft(2 * s * lo)
    Z[np.abs(w) >= band] = 0
    env = np.fft.ifft(Z)
    taper = np.hanning(len(t)) if window else np.ones(len(t))
    E = np.fft.fftshift(np.fft.fft(2 * (s - s.mean()) * taper * lo))
    ws = np.fft.fftshift(w)
    keep = np.abs(ws) < band
    return EnvelopeSpectrum(omega=ws[keep], magnitude=np.abs(E[keep]) * dt, envelope=env)


def superposition_01(ratio: float) -> CantileverState:
    """``C_0 = 1 / sqrt(1 + r^2)``, ``C_1 = r C_0``."""
    c0 = 1 / np.sqrt(1 + ratio**2)
    return CantileverState.pure([c0, ratio * c0])


def superposition_012(alpha: complex) -> CantileverState:
    """``C_0 = C_1 = C_2 / alpha = 1 / sqrt(2 + |alpha|^2)``."""
    c = 1 / np.sqrt(2 + abs(alpha) ** 2)
    return CantileverState.pure([c, c, alpha * c])
