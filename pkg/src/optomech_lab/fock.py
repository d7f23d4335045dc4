"""Truncated Fock-space tools.

Ladder operators, displacement matrix elements, Wigner functions of
density matrices and a small Lindblad integrator.  These serve as the
brute-force reference for the phase-space results of the photon
subtraction and cat-state modules.

Phase-space points use the complex amplitude ``alpha`` with
``<a> = alpha`` for a coherent state, so the vacuum Wigner function is
``(2 / pi) exp(-2 |alpha|^2)``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import eval_genlaguerre, gammaln

from .errors import CutoffError, IntegrationError


def annihilation(dim: int) -> np.ndarray:
    """Matrix of ``a`` on ``|0>, ..., |dim - 1>``."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def number(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float))


def coherent(alpha: complex, dim: int) -> np.ndarray:
    """Truncated coherent-state vector (not renormalized)."""
    n = np.arange(dim)
    logc = n * np.log(abs(alpha) + 1e-300) - 0.5 * gammaln(n + 1)
    amp = np.exp(logc - abs(alpha) ** 2 / 2) * np.exp(1j * n * np.angle(alpha))
    if alpha == 0:
        amp = np.zeros(dim, complex)
        amp[0] = 1.0
    return amp


def tail_weight(rho: np.ndarray, last: int = 2) -> float:
    """Population in the top ``last`` Fock levels, a truncation diagnostic."""
    d = np.real(np.diag(rho))
    return float(np.sum(d[-last:]))


def check_cutoff(rho: np.ndarray, tol: float = 1e-8, last: int = 2) -> None:
    w = tail_weight(rho, last)
    if w > tol:
        raise CutoffError(f"Fock truncation tail weight {w:.3g} exceeds {tol:.1e}")


def displacement_elements(alpha: complex, dim: int) -> np.ndarray:
    """``<m| D(alpha) |n>`` for ``m, n < dim`` from the Laguerre closed form."""
    m = np.arange(dim)[:, None]
    n = np.arange(dim)[None, :]
    x = abs(alpha) ** 2
    lo = np.minimum(m, n)
    hi = np.maximum(m, n)
    k = hi - lo
    lag = eval_genlaguerre(lo, k, x)
    logpref = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - x / 2
    z = np.where(m >= n, alpha, -np.conj(alpha))
    with np.errstate(divide="ignore", invalid="ignore"):
        powk = np.where(k == 0, 1.0 + 0j, z ** k)
    return np.exp(logpref) * powk * lag


def wigner_point(rho: np.ndarray, alpha: complex, pad: int = 30) -> float:
    """Wigner function of ``rho`` at one point, via displaced parity.

    ``W(alpha) = (2 / pi) sum_k (-1)^k <k| D(-alpha) rho D(alpha) |k>``;
    the displacement is evaluated on a space ``pad`` levels larger than
    ``rho`` so the truncation does not bias the parity sum.
    """
    dim = rho.shape[0]
    big = dim + pad
    Dm = displacement_elements(-alpha, big)[:, :dim]
    sub = Dm @ rho @ Dm.conj().T
    parity = (-1.0) ** np.arange(big)
    return float(2 / np.pi * np.real(np.sum(parity * np.diag(sub))))


def wigner_grid(rho: np.ndarray, re_axis, im_axis, pad: int = 30) -> np.ndarray:
    """Wigner function on the mesh ``alpha = re + i im``; rows follow ``im_axis``."""
    re_axis = np.asarray(re_axis, float)
    im_axis = np.asarray(im_axis, float)
    out = np.empty((im_axis.size, re_axis.size))
    for i, y in enumerate(im_axis):
        for j, x in enumerate(re_axis):
            out[i, j] = wigner_point(rho, complex(x, y), pad)
    return out


def wigner_diagonal(populations, alpha) -> np.ndarray:
    """Wigner function of a Fock-diagonal state (rotationally symmetric)."""
    p = np.asarray(populations, float)
    r2 = np.abs(np.asarray(alpha)) ** 2
    out = np.zeros_like(r2, dtype=float)
    for n, pn in enumerate(p):
        if pn != 0.0:
            out = out + pn * (-1) ** n * eval_genlaguerre(n, 0, 4 * r2)
    return 2 / np.pi * np.exp(-2 * r2) * out


def lindblad_rhs(H: np.ndarray, jumps, rho: np.ndarray) -> np.ndarray:
    """``-i [H, rho] + sum_k (L rho L^dag - {L^dag L, rho} / 2)``."""
    out = -1j * (H @ rho - rho @ H)
    for L in jumps:
        Ld = L.conj().T
        LdL = Ld @ L
        out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def evolve_lindblad(H, jumps, rho0: np.ndarray, t_grid, rtol: float = 1e-10,
                    atol: float = 1e-12, H_of_t: Optional[callable] = None):
    """Integrate the master equation and return the density matrices on ``t_grid``.

    ``H_of_t``, if given, replaces the constant Hamiltonian ``H``.
    """
    dim = rho0.shape[0]
    jumps = [np.asarray(L, complex) for L in jumps]
    t_grid = np.asarray(t_grid, float)

    def rhs(t, y):
        rho = y.reshape(dim, dim)
        Ht = H_of_t(t) if H_of_t is not None else H
        return lindblad_rhs(Ht, jumps, rho).ravel()

    sol = solve_ivp(rhs, (t_grid[0], t_grid[-1]), np.asarray(rho0, complex).ravel(),
                    t_eval=t_grid, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"Lindblad integration failed: {sol.message}")
    return sol.y.T.reshape(-1, dim, dim)
