"""Non-Gaussian mechanical states conditioned on photon subtraction.

A single photon is removed from the cavity field of a two-mode Gaussian
mirror-field state and the Wigner function of the mirror is reconstructed.
Four conditioning maps are provided:

* formal subtraction, ``tr_C[a rho a^dag]``, from the closed form
  (:func:`wigner_formal`);
* a beam-splitter tap followed by projection of the ancilla onto ``|1>``
  (:func:`wigner_bs`);
* the same tap read by an on/off detector of efficiency ``epsilon``
  (:func:`wigner_bs_inefficient`);
* free thermal damping of the prepared state (:func:`decay_negativity`).

Units and axes
--------------
:class:`TwoModeBlocks` stores entries in the units of the closed form, in
which the vacuum has unit variance (twice the vacuum-1/2 covariance used
elsewhere in the package).  Phase-space points ``delta = delta_r + i delta_i``
are scaled so that the vacuum Wigner function is ``(2/pi) exp(-2|delta|^2)``.
The closed form pairs ``delta_i`` with the first mechanical quadrature and
``delta_r`` with the second, so that ``q = 2 delta_i`` and ``p = -2 delta_r``
in unit-vacuum variables; equivalently ``delta = i alpha`` with ``alpha``
the usual complex amplitude.  Every route in this module uses this axis
assignment, and the Fock-space comparison in the tests confirms it.

The beam-splitter and detector routes are computed exactly: the
projector symbols are Gaussians times quadratic polynomials, so every
conditional Wigner function is a short sum of Gaussian-times-quadratic
terms (:class:`PhaseSpaceForm`) whose integrals are closed-form moments.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import gaussian_core as gc
from .errors import ArgumentError, PhysicalityError

log = logging.getLogger(__name__)

GRID_POINTS = 161
GRID_HALF_WIDTH = 2.5
"""Default half width of the grid, five vacuum standard deviations (1/2 each)."""
BOUNDARY_RATIO = 1e-8
MAX_WIDENINGS = 40

# mechanical quadratures (q, p) in vacuum-1/2 units as a function of
# (delta_r, delta_i): q = sqrt2 delta_i, p = -sqrt2 delta_r
_Q_OF_DELTA = np.array([[0.0, np.sqrt(2.0)], [-np.sqrt(2.0), 0.0]])


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoModeBlocks:
    """Mirror-field covariance in unit-vacuum variables.

    ``M = diag(m11, m22)`` is the mirror block, ``C = [[c11, c12], [c12, c22]]``
    the field block and ``R = [[r11, r12], [r21, r22]]`` the correlations
    (rows: mirror quadratures, columns: field quadratures).
    """

    m11: float
    m22: float
    c11: float
    c22: float
    r11: float
    r12: float
    r21: float
    r22: float
    c12: float = 0.0

    def __post_init__(self):
        for name in ("m11", "m22", "c11", "c22"):
            if not getattr(self, name) > 0:
                raise PhysicalityError(f"{name} must be positive")
        if not gc.is_physical(self.covariance()):
            raise PhysicalityError("blocks do not form a physical covariance matrix")

    @property
    def M(self) -> np.ndarray:
        return np.diag([self.m11, self.m22])

    @property
    def C(self) -> np.ndarray:
        return np.array([[self.c11, self.c12], [self.c12, self.c22]])

    @property
    def R(self) -> np.ndarray:
        return np.array([[self.r11, self.r12], [self.r21, self.r22]])

    def matrix(self) -> np.ndarray:
        """Assembled 4x4 matrix in unit-vacuum variables, order (q, p, x, y)."""
        return np.block([[self.M, self.R], [self.R.T, self.C]])

    def covariance(self) -> np.ndarray:
        """Same state with vacuum variance 1/2, the package convention."""
        return self.matrix() / 2

    @classmethod
    def from_covariance(cls, V, diagonalize: bool = True) -> "TwoModeBlocks":
        """Build from a vacuum-1/2 covariance ordered (mirror, field).

        A correlated mirror block ``m12 != 0`` is removed by a local phase
        rotation of the mirror, which leaves all conditional Wigner
        functions unchanged up to the same rotation.
        """
        V = gc.symmetrize(V)
        if V.shape != (4, 4):
            raise ArgumentError("two-mode covariance must be 4x4")
        gc.check_physical(V)
        W = 2 * V
        if diagonalize and abs(W[0, 1]) > 1e-14 * max(W[0, 0], W[1, 1]):
            theta = 0.5 * np.arctan2(2 * W[0, 1], W[0, 0] - W[1, 1])
            c, s = np.cos(theta), np.sin(theta)
            O = np.eye(4)
            O[:2, :2] = [[c, s], [-s, c]]
            W = O @ W @ O.T
        elif abs(W[0, 1]) > 1e-14 * max(W[0, 0], W[1, 1]):
            raise ArgumentError("mirror block is not diagonal")
        return cls(m11=W[0, 0], m22=W[1, 1], c11=W[2, 2], c22=W[3, 3],
                   r11=W[0, 2], r12=W[0, 3], r21=W[1, 2], r22=W[1, 3], c12=W[2, 3])

    def squeezed_below_vacuum(self) -> bool:
        """True if a mirror or field variance (any direction) is below 1."""
        ev = np.concatenate([np.linalg.eigvalsh(self.M), np.linalg.eigvalsh(self.C)])
        return bool(np.min(ev) < 1.0 - 1e-12)


@dataclass
class WignerGrid:
    """Samples of a single-mode Wigner function on a rectangular grid.

    ``values[i, j]`` is ``W(re_axis[j], im_axis[i])``.  ``raw_norm`` is the
    grid integral before renormalization and ``norm`` the integral after it.
    """

    re_axis: np.ndarray
    im_axis: np.ndarray
    values: np.ndarray
    norm: float
    raw_norm: float = 1.0
    raw_values: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def origin(self) -> float:
        """``W(0, 0)``, interpolated if the origin is not a grid node."""
        j = np.argmin(np.abs(self.re_axis))
        i = np.argmin(np.abs(self.im_axis))
        if self.re_axis[j] == 0 and self.im_axis[i] == 0:
            return float(self.values[i, j])
        from scipy.interpolate import RegularGridInterpolator

        f = RegularGridInterpolator((self.im_axis, self.re_axis), self.values, method="cubic")
        return float(f([[0.0, 0.0]])[0])

    @property
    def min(self) -> float:
        return float(np.min(self.values))

    def to_csv(self, path) -> None:
        """Rows ``delta_r,delta_i,W``; header lines start with ``#``."""
        X, Y = np.meshgrid(self.re_axis, self.im_axis)
        with open(path, "w") as fh:
            for k, v in self.metadata.items():
                fh.write(f"# {k} = {v}\n")
            fh.write(f"# norm = {self.norm:.17g}\n# raw_norm = {self.raw_norm:.17g}\n")
            fh.write("delta_r,delta_i,W\n")
            for x, y, w in zip(X.ravel(), Y.ravel(), self.values.ravel()):
                fh.write(f"{x:.17g},{y:.17g},{w:.17g}\n")

    def to_raster(self, path) -> None:
        """Eight text header lines followed by little-endian float64 samples."""
        header = [
            "WIGNER-RASTER v1",
            f"nre {self.re_axis.size}",
            f"nim {self.im_axis.size}",
            f"re {self.re_axis[0]:.17g} {self.re_axis[-1]:.17g}",
            f"im {self.im_axis[0]:.17g} {self.im_axis[-1]:.17g}",
            f"norm {self.norm:.17g}",
            f"raw_norm {self.raw_norm:.17g}",
            "layout row-major rows=im cols=re dtype=<f8",
        ]
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_raster(cls, path) -> "WignerGrid":
        with open(path, "rb") as fh:
            lines = [fh.readline().decode("ascii").split() for _ in range(8)]
            data = np.frombuffer(fh.read(), dtype="<f8")
        nre, nim = int(lines[1][1]), int(lines[2][1])
        re = np.linspace(float(lines[3][1]), float(lines[3][2]), nre)
        im = np.linspace(float(lines[4][1]), float(lines[4][2]), nim)
        return cls(re, im, data.reshape(nim, nre).copy(), norm=float(lines[5][1]),
                   raw_norm=float(lines[6][1]))


# ---------------------------------------------------------------------------
# Gaussian-times-quadratic phase-space functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseSpaceForm:
    """``f(x) = sum_k g_k exp(-x^T Q_k x / 2) (a_k + x^T L_k x)`` for ``x = (delta_r, delta_i)``."""

    terms: tuple

    def __call__(self, dr, di) -> np.ndarray:
        dr, di = np.broadcast_arrays(np.asarray(dr, float), np.asarray(di, float))
        out = np.zeros(dr.shape)
        for g, Q, a, L in self.terms:
            quad_q = Q[0, 0] * dr**2 + 2 * Q[0, 1] * dr * di + Q[1, 1] * di**2
            quad_l = L[0, 0] * dr**2 + 2 * L[0, 1] * dr * di + L[1, 1] * di**2
            out = out + g * np.exp(-quad_q / 2) * (a + quad_l)
        return out

    def integral(self) -> float:
        """Exact integral over the plane."""
        tot = 0.0
        for g, Q, a, L in self.terms:
            Qi = np.linalg.inv(Q)
            tot += g * 2 * np.pi / np.sqrt(np.linalg.det(Q)) * (a + np.trace(L @ Qi))
        return float(tot)

    def weighted_integral(self, precision: float) -> float:
        """``int f(x) exp(-precision |x|^2 / 2) dx`` in closed form."""
        tot = 0.0
        for g, Q, a, L in self.terms:
            Qp = Q + precision * np.eye(2)
            tot += g * 2 * np.pi / np.sqrt(np.linalg.det(Qp)) * (a + np.trace(L @ np.linalg.inv(Qp)))
        return float(tot)

    def gaussian_average(self, var: float) -> float:
        """``int f(x) N(x; 0, var I) dx`` in closed form."""
        return self.weighted_integral(1.0 / var) / (2 * np.pi * var)

    def scaled(self, c: float) -> "PhaseSpaceForm":
        return PhaseSpaceForm(tuple((c * g, Q, a, L) for g, Q, a, L in self.terms))


def _conditional_form(V, keep: Sequence[int], weights) -> PhaseSpaceForm:
    """Mirror Wigner function after weighting the other modes by projector symbols.

    ``V`` is a vacuum-1/2 covariance whose first mode is the mirror,
    ``keep`` lists the quadrature indices (beyond the mirror's) that enter
    the weight; all other modes are traced out.  Each weight is
    ``c * (c0 + c2 |z|^2) exp(-lam |z|^2)`` with ``|z|^2`` the summed
    squared quadratures of the kept modes, and the result is
    ``int W(m, z) weight(z) dz`` expressed in ``delta`` coordinates.
    """
    idx = [0, 1] + list(keep)
    Vs = V[np.ix_(idx, idx)]
    P = np.linalg.inv(Vs)
    k = len(keep)
    norm0 = 1.0 / ((2 * np.pi) ** ((k + 2) / 2) * np.sqrt(np.linalg.det(Vs)))
    T = _Q_OF_DELTA
    terms = []
    for c, c0, c2, lam in weights:
        Pp = P.copy()
        Pp[2:, 2:] += 2 * lam * np.eye(k)
        if k == 0:
            S, Lm, trace_ai, pref = Pp, np.zeros((2, 2)), 0.0, c * norm0
        else:
            A = Pp[2:, 2:]
            Ai = np.linalg.inv(A)
            B = Pp[2:, :2]
            S = Pp[:2, :2] - B.T @ Ai @ B
            Lm = B.T @ Ai @ Ai @ B
            trace_ai = np.trace(Ai)
            pref = c * norm0 * (2 * np.pi) ** (k / 2) / np.sqrt(np.linalg.det(A))
        # change of variables m = T delta, Jacobian |det T| = 2
        terms.append((2 * pref, T.T @ S @ T, c0 + c2 * trace_ai, c2 * (T.T @ Lm @ T)))
    return PhaseSpaceForm(tuple(terms))


def formal_form(blocks: TwoModeBlocks) -> PhaseSpaceForm:
    """Unnormalized ``tr_C[a rho a^dag]`` mirror Wigner function as a Gaussian moment."""
    # Weyl symbol of a^dag a is (x^2 + y^2)/2 - 1/2 in vacuum-1/2 units
    return _conditional_form(blocks.covariance(), [2, 3], [(1.0, -0.5, 0.5, 0.0)])


def beam_splitter(tau: float) -> np.ndarray:
    """Symplectic matrix mixing two modes with amplitude transmittance ``tau``."""
    r = np.sqrt(1 - tau**2)
    return np.block([[tau * np.eye(2), -r * np.eye(2)], [r * np.eye(2), tau * np.eye(2)]])


def tapped_covariance(blocks: TwoModeBlocks, tau: float) -> np.ndarray:
    """(mirror, field, ancilla) covariance after the tap, vacuum-1/2 units."""
    _check_tau(tau)
    V = np.zeros((6, 6))
    V[:4, :4] = blocks.covariance()
    V[4:, 4:] = 0.5 * np.eye(2)
    S = np.eye(6)
    S[2:, 2:] = beam_splitter(tau)
    return S @ V @ S.T


def bs_form(blocks: TwoModeBlocks, tau: float) -> PhaseSpaceForm:
    """Mirror Wigner function after projecting the tapped ancilla onto ``|1>``."""
    V = tapped_covariance(blocks, tau)
    # symbol of |1><1| is 2 (2|z|^2 / 2 * 2 - 1) e^{-|z|^2} = (4|z|^2 - 2) e^{-|z|^2}
    return _conditional_form(V, [4, 5], [(1.0, -2.0, 4.0, 1.0)])


def no_click_form(blocks: TwoModeBlocks, tau: float, epsilon: float) -> PhaseSpaceForm:
    """Mirror Wigner function weighted by the no-click element ``(1 - eps)^n``."""
    V = tapped_covariance(blocks, tau)
    # symbol of s^n is 2/(1+s) exp(-(1-s)/(1+s) |z|^2) with s = 1 - eps
    return _conditional_form(V, [4, 5], [(2 / (2 - epsilon), 1.0, 0.0, epsilon / (2 - epsilon))])


def click_form(blocks: TwoModeBlocks, tau: float, epsilon: float) -> PhaseSpaceForm:
    """Mirror Wigner function for a click, ``marginal - no-click``."""
    marginal = _conditional_form(blocks.covariance(), [], [(1.0, 1.0, 0.0, 0.0)])
    nc = no_click_form(blocks, tau, epsilon).scaled(-1.0)
    return PhaseSpaceForm(marginal.terms + nc.terms)


def _check_tau(tau):
    if not 0 < tau < 1:
        raise ArgumentError("beam-splitter transmittance must lie in (0, 1)")


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def default_grid(half_width: float = GRID_HALF_WIDTH, points: int = GRID_POINTS):
    ax = np.linspace(-half_width, half_width, points)
    return ax, ax.copy()


def _grid_integral(vals, re, im) -> float:
    return float(trapezoid(trapezoid(vals, re, axis=1), im))


def _evaluate_on_grid(func, grid, widen: bool, label: str) -> WignerGrid:
    """Sample ``func(dr, di)``, widening the default grid until the boundary is negligible."""
    if grid is None:
        half = GRID_HALF_WIDTH
        for _ in range(MAX_WIDENINGS):
            re, im = default_grid(half)
            X, Y = np.meshgrid(re, im)
            vals = func(X, Y)
            edge = max(np.max(np.abs(vals[0])), np.max(np.abs(vals[-1])),
                       np.max(np.abs(vals[:, 0])), np.max(np.abs(vals[:, -1])))
            if not widen or edge < BOUNDARY_RATIO * np.max(np.abs(vals)):
                break
            half *= 1.25
    else:
        re, im = (np.asarray(a, float) for a in grid)
        X, Y = np.meshgrid(re, im)
        vals = func(X, Y)
    raw = _grid_integral(vals, re, im)
    if raw == 0 or not np.isfinite(raw):
        raise PhysicalityError(f"{label}: Wigner function integrates to {raw}")
    values = vals / raw
    norm = _grid_integral(values, re, im)
    log.debug("%s: raw grid norm %.12g, renormalization factor %.12g", label, raw, 1 / raw)
    return WignerGrid(re, im, values, float(norm), float(raw), vals, {"route": label})


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def formal_polynomial(blocks: TwoModeBlocks, dr, di) -> np.ndarray:
    """The printed polynomial ``A(delta_r, delta_i)``."""
    b = blocks
    ssum = b.c11 + b.c22 - 2
    return (b.m22**2 * (ssum * b.m11**2 + (4 * di**2 - b.m11) * (b.r11**2 + b.r12**2))
            + b.m11**2 * (4 * dr**2 - b.m22) * (b.r22**2 + b.r21**2)
            - 8 * b.m11 * b.m22 * (b.r11 * b.r21 + b.r12 * b.r22) * dr * di)


def wigner_formal_value(blocks: TwoModeBlocks, dr, di) -> np.ndarray:
    """Printed closed form of the subtracted mirror Wigner function (unnormalized)."""
    b = blocks
    det_m = b.m11 * b.m22
    if det_m <= 0:
        raise PhysicalityError("mirror block must have positive determinant")
    dr = np.asarray(dr, float)
    di = np.asarray(di, float)
    gauss = np.exp(-2 * (di**2 / b.m11 + dr**2 / b.m22))
    return 2 * np.pi * formal_polynomial(b, dr, di) * gauss / (det_m**2.5 * (b.c22 + b.c11 - 2))


def wigner_formal(blocks: TwoModeBlocks, grid=None, widen: bool = True) -> WignerGrid:
    """Mirror Wigner function after formal single-photon subtraction.

    Parameters
    ----------
    blocks : TwoModeBlocks
    grid : (re_axis, im_axis), optional
        Evaluation axes.  By default a 161 x 161 grid over five vacuum
        widths, widened until the boundary falls below 1e-8 of the peak.

    Returns
    -------
    WignerGrid
        Renormalized samples; ``raw_values`` keeps the closed-form values.
    """
    return _evaluate_on_grid(lambda x, y: wigner_formal_value(blocks, x, y), grid, widen,
                             "formal")


def origin_value(blocks: TwoModeBlocks) -> float:
    """Normalized ``W(0, 0)`` of the formally subtracted state, from exact moments."""
    f = formal_form(blocks)
    return float(f(0.0, 0.0) / f.integral())


def negativity_criterion(blocks: TwoModeBlocks) -> bool:
    """Closed-form test for ``W(0, 0) < 0`` after formal subtraction.

    Evaluates ``m11/m22 > ((c11 + c22 - 2) m11 - (r11^2 + r12^2)) / (r22^2 + r21^2)``
    after multiplying through by the positive denominator, so that states
    with ``r21 = r22 = 0`` are also handled.  A warning is issued when a
    variance is squeezed below the vacuum, where the derivation of the
    inequality does not apply.
    """
    b = blocks
    if b.squeezed_below_vacuum():
        warnings.warn("negativity criterion assumes no sub-vacuum variances", stacklevel=2)
    lhs = b.m11 * (b.r22**2 + b.r21**2)
    rhs = b.m22 * ((b.c11 + b.c22 - 2) * b.m11 - (b.r11**2 + b.r12**2))
    return bool(lhs > rhs)


def wigner_bs(blocks: TwoModeBlocks, tau: float, grid=None, widen: bool = True) -> WignerGrid:
    """Mirror Wigner function for a beam-splitter tap and a one-photon projection."""
    _check_tau(tau)
    f = bs_form(blocks, tau)
    return _evaluate_on_grid(f, grid, widen, f"bs(tau={tau})")


def wigner_bs_inefficient(blocks: TwoModeBlocks, tau: float, epsilon: float, grid=None,
                          widen: bool = True) -> WignerGrid:
    """Mirror Wigner function for a tap read by an on/off detector of efficiency ``epsilon``."""
    _check_tau(tau)
    if not 0 < epsilon <= 1:
        raise ArgumentError("detector efficiency must lie in (0, 1]")
    f = click_form(blocks, tau, epsilon)
    return _evaluate_on_grid(f, grid, widen, f"bs(tau={tau}, eps={epsilon})")


def no_click_characteristic(blocks: TwoModeBlocks, tau: float, epsilon: float, k):
    """``Phi(mu, eps)``: characteristic function of the no-click mirror operator.

    ``k`` has shape (..., 2) and is the Fourier variable conjugate to
    ``(delta_r, delta_i)``; ``Phi(0, eps)`` is the no-click probability.
    """
    f = no_click_form(blocks, tau, epsilon)
    k = np.asarray(k, float)
    out = np.zeros(k.shape[:-1])
    for g, Q, a, L in f.terms:
        Qi = np.linalg.inv(Q)
        kk = np.einsum("...i,ij,...j->...", k, Qi, k)
        base = g * 2 * np.pi / np.sqrt(np.linalg.det(Q)) * np.exp(-kk / 2)
        # L = 0 for the no-click weight
        out = out + base * a
    return out


def inefficiency_perturbation(blocks: TwoModeBlocks, tau: float, epsilon: float,
                              k_max: float = 10.0, points: int = 81) -> float:
    """``max_mu |Phi(mu, 1) - Phi(mu, eps)|`` sampled on a square grid."""
    ax = np.linspace(-k_max, k_max, points)
    K = np.stack(np.meshgrid(ax, ax), axis=-1)
    d = no_click_characteristic(blocks, tau, 1.0, K) - no_click_characteristic(blocks, tau,
                                                                                 epsilon, K)
    return float(np.max(np.abs(d)))


def decay_negativity(blocks_or_form, gamma: float, nbar: float, t_grid,
                     kernel: str = "exact") -> np.ndarray:
    """``W(0, 0, t)`` under thermal damping of the formally subtracted state.

    The Wigner function at ``t`` is the convolution of the prepared one
    with a thermal Gaussian,
    ``W(d, t) = 2/(pi N tau) int W(s, 0) exp(-2 |d - s e^{-gamma t}|^2 / (N tau)) d^2 s``,
    with ``N = 2 nbar + 1`` and ``tau = 1 - e^{-2 gamma t}``.

    Parameters
    ----------
    blocks_or_form : TwoModeBlocks or PhaseSpaceForm
    kernel : {"exact", "printed"}
        ``"exact"`` uses the kernel above, the solution of the damping
        master equation.  ``"printed"`` places the scaling on the
        evaluation point, ``|s - d e^{-gamma t}|``; the two agree at
        ``t = 0`` and to first order in ``gamma t``.
    """
    if gamma <= 0 or nbar < 0:
        raise ArgumentError("need gamma > 0 and nbar >= 0")
    if kernel not in ("exact", "printed"):
        raise ArgumentError("kernel must be 'exact' or 'printed'")
    f = blocks_or_form if isinstance(blocks_or_form, PhaseSpaceForm) else formal_form(blocks_or_form)
    f = f.scaled(1.0 / f.integral())
    big_n = 2 * nbar + 1
    out = []
    for t in np.asarray(t_grid, float):
        if t == 0:
            out.append(float(f(0.0, 0.0)))
            continue
        tau = -np.expm1(-2 * gamma * t)
        var = big_n * tau / 4
        # exact: N(0; s e^{-gt}, var); printed: N(s; 0, var)
        shrink = np.exp(-2 * gamma * t) if kernel == "exact" else 1.0
        out.append(f.weighted_integral(shrink / var) / (2 * np.pi * var))
    return np.array(out)


def first_zero_crossing(t_grid, values) -> Optional[float]:
    """Linear interpolation of the first sign change of ``values``, or None."""
    t = np.asarray(t_grid, float)
    v = np.asarray(values, float)
    s = np.sign(v)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    if idx.size == 0:
        return None
    i = idx[0]
    return float(t[i] - v[i] * (t[i + 1] - t[i]) / (v[i + 1] - v[i]))


def atomic_subtractor_weights(rabi_t: float, n_max: int):
    """Amplitudes of ``sin(G sqrt(n) t) / sqrt(n)`` for ``n = 1..n_max``.

    Parameters
    ----------
    rabi_t : float
        Product ``G t`` of Rabi frequency and interaction time.
    n_max : int

    Returns
    -------
    weights : ndarray
        ``w_n`` for ``n = 1..n_max``; ideal subtraction has ``w_n`` independent of n.
    deviation : float
        ``max_n |w_n / (G t) - 1|``, the relative departure from a flat profile.
    """
    if n_max < 1:
        raise ArgumentError("n_max must be at least 1")
    n = np.arange(1, n_max + 1, dtype=float)
    w = np.sin(rabi_t * np.sqrt(n)) / np.sqrt(n)
    dev = float(np.max(np.abs(w / rabi_t - 1))) if rabi_t != 0 else 0.0
    return w, dev


def rotational_asymmetry(grid: WignerGrid) -> float:
    """``1 - l_min / l_max`` for the second-moment matrix of ``|W|`` on the grid."""
    X, Y = np.meshgrid(grid.re_axis, grid.im_axis)
    w = np.abs(grid.values)
    tot = w.sum()
    mx, my = (w * X).sum() / tot, (w * Y).sum() / tot
    cxx = (w * (X - mx) ** 2).sum() / tot
    cyy = (w * (Y - my) ** 2).sum() / tot
    cxy = (w * (X - mx) * (Y - my)).sum() / tot
    ev = np.linalg.eigvalsh([[cxx, cxy], [cxy, cyy]])
    return float(1 - ev[0] / ev[1])


def pair_blocks(temperature: float = 0.4, detuning_ratio: float = 0.05, **kw) -> TwoModeBlocks:
    """Steady-state blocks of the photon-subtraction parameter set."""
    from . import models as md
    from . import presets as ps

    mech, cav = ps.optomech_pair(temperature=temperature, detuning_ratio=detuning_ratio, **kw)
    model = md.build_two_mode(mech, cav)
    return TwoModeBlocks.from_covariance(gc.solve_lyapunov(model.K, model.D))
