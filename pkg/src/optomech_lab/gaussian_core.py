"""Covariance-matrix algebra for Gaussian states of bosonic modes.

Conventions
-----------
All covariance matrices use the canonical quadrature ordering
``(q1, p1, q2, p2, ...)`` with dimensionless quadratures normalised so
that the vacuum has variance 1/2, i.e. ``V = 1/2 * I`` for the vacuum and
``V = (nbar + 1/2) * I`` for a thermal mode.

Linear Langevin dynamics ``dphi/dt = K phi + noise`` with diffusion
matrix ``D`` gives the covariance equation::

    dV/dt = K V + V K^T + D

whose stationary solution satisfies the Lyapunov equation
``K V + V K^T + D = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .errors import (
    ArgumentError,
    DimensionError,
    IntegrationError,
    PhysicalityError,
    StabilityError,
)

#: Tolerance on the real part of drift eigenvalues used by :func:`is_stable`.
STABILITY_TOL = 1e-12
#: Tolerance below 1/2 tolerated for symplectic eigenvalues of stored states.
PHYSICAL_TOL = 1e-9
#: Looser tolerance applied along integrated trajectories.
TRAJECTORY_TOL = 1e-6


def _check_square_even(V):
    V = np.asarray(V)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {V.shape}")
    if V.shape[0] % 2:
        raise DimensionError(f"expected even dimension 2N, got {V.shape[0]}")
    return V


def n_modes(V) -> int:
    """Number of modes ``N`` of a ``2N x 2N`` matrix."""
    return _check_square_even(V).shape[0] // 2


def symplectic_form(n: int) -> np.ndarray:
    """Block-diagonal symplectic form ``Omega = (+)_j [[0, 1], [-1, 0]]``."""
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symmetrize(V) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    return 0.5 * (V + V.T)


def vacuum(n: int) -> np.ndarray:
    return 0.5 * np.eye(2 * n)


def thermal(nbar: Union[float, Sequence[float]]) -> np.ndarray:
    """Product of thermal states with occupations ``nbar`` (scalar or list)."""
    nb = np.atleast_1d(np.asarray(nbar, dtype=float))
    return np.diag(np.repeat(nb + 0.5, 2))


def two_mode_squeezed(r: float, nbar: float = 0.0) -> np.ndarray:
    """Two-mode squeezed thermal state with squeezing ``r``.

    For ``nbar = 0`` this is the two-mode squeezed vacuum: local variances
    ``cosh(2r)/2`` and correlations ``+-sinh(2r)/2`` between ``q1, q2`` and
    ``p1, p2``.
    """
    c = (nbar + 0.5) * np.cosh(2 * r)
    s = (nbar + 0.5) * np.sinh(2 * r)
    Z = np.diag([1.0, -1.0])
    return np.block([[c * np.eye(2), s * Z], [s * Z, c * np.eye(2)]])


def symplectic_eigenvalues(V) -> np.ndarray:
    """Symplectic spectrum of ``V``.

    Returns the ``N`` moduli of the eigenvalues of ``i Omega V`` in ascending
    order, each doubly-degenerate pair ``+-nu`` reported once.

    Examples
    --------
    >>> symplectic_eigenvalues(vacuum(2))
    array([0.5, 0.5])
    """
    V = _check_square_even(V)
    n = V.shape[0] // 2
    ev = np.linalg.eigvals(1j * symplectic_form(n) @ symmetrize(V))
    return np.sort(np.abs(ev))[::2]


def min_symplectic_eigenvalue(V) -> float:
    return float(symplectic_eigenvalues(V)[0])


def is_physical(V, tol: float = PHYSICAL_TOL) -> bool:
    """Robertson-Schroedinger check: all symplectic eigenvalues >= 1/2."""
    V = _check_square_even(V)
    if not np.allclose(V, V.T, rtol=1e-12, atol=1e-12 * np.abs(V).max()):
        return False
    return min_symplectic_eigenvalue(V) >= 0.5 - tol


def check_physical(V, tol: float = PHYSICAL_TOL, what: str = "covariance") -> None:
    nu = min_symplectic_eigenvalue(V)
    if nu < 0.5 - tol:
        raise PhysicalityError(
            f"{what} is unphysical: minimum symplectic eigenvalue {nu:.12g} < 1/2"
        )


def _mode_list(modes, n: int) -> list:
    modes = sorted({int(m) for m in np.atleast_1d(modes)})
    if not modes:
        raise ArgumentError("mode set must be non-empty")
    if modes[0] < 0 or modes[-1] >= n:
        raise ArgumentError(f"mode index out of range for {n} modes: {modes}")
    return modes


def partial_transpose(V, modes) -> np.ndarray:
    """Partial transposition as momentum inversion on ``modes``.

    ``modes`` must be a non-empty proper subset of ``range(N)``.
    """
    V = _check_square_even(V)
    n = V.shape[0] // 2
    modes = _mode_list(modes, n)
    if len(modes) == n:
        raise ArgumentError("partial transposition over all modes is a full transposition")
    s = np.ones(2 * n)
    for m in modes:
        s[2 * m + 1] = -1.0
    return V * np.outer(s, s)


def reduce(V, modes) -> np.ndarray:
    """Reduced covariance of the listed modes, canonical order preserved."""
    V = _check_square_even(V)
    modes = _mode_list(modes, V.shape[0] // 2)
    idx = np.array([[2 * m, 2 * m + 1] for m in modes]).ravel()
    return V[np.ix_(idx, idx)]


def is_stable(K, tol: float = STABILITY_TOL) -> bool:
    """True iff every eigenvalue of ``K`` has real part ``< -tol``."""
    K = np.asarray(K)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {K.shape}")
    return bool(np.all(np.linalg.eigvals(K).real < -tol))


def slowest_decay_rate(K) -> float:
    """``min |Re lambda|`` over the eigenvalues of a stable ``K``."""
    return float(np.min(np.abs(np.linalg.eigvals(K).real)))


def require_stable(K, time=None) -> None:
    ev = np.linalg.eigvals(np.asarray(K))
    worst = ev[np.argmax(ev.real)]
    if worst.real >= -STABILITY_TOL:
        where = "" if time is None else f" at t = {time:.6g} s"
        raise StabilityError(
            f"drift matrix is unstable{where}: eigenvalue {worst:.6g} has Re >= 0",
            eigenvalue=worst,
            time=time,
        )


def lyapunov_residual(K, D, V) -> float:
    """Relative residual ``||K V + V K^T + D|| / ||D||`` (Frobenius)."""
    R = K @ V + V @ K.T + D
    nd = np.linalg.norm(D)
    return float(np.linalg.norm(R) / (nd if nd > 0 else 1.0))


def _lyapunov_kron(K, D):
    n = K.shape[0]
    eye = np.eye(n)
    A = np.kron(eye, K) + np.kron(K, eye)
    v = np.linalg.solve(A, -D.reshape(-1, order="F"))
    return v.reshape((n, n), order="F")


def solve_lyapunov(K, D, tol: float = 1e-10) -> np.ndarray:
    """Stationary covariance solving ``K V + V K^T + D = 0``.

    Uses the Schur-based Bartels-Stewart algorithm. When the residual misses
    ``tol * ||D||`` and the system is small (``2N <= 8``) the vectorised
    Kronecker solve is used instead, followed by one step of iterative
    refinement.

    Raises
    ------
    StabilityError
        if ``K`` has an eigenvalue with non-negative real part.
    """
    K = np.asarray(K, dtype=float)
    D = symmetrize(D)
    require_stable(K)
    V = symmetrize(sla.solve_continuous_lyapunov(K, -D))
    if lyapunov_residual(K, D, V) > tol and K.shape[0] <= 8:
        V = symmetrize(_lyapunov_kron(K, D))
    if lyapunov_residual(K, D, V) > tol:
        R = K @ V + V @ K.T + D
        V = symmetrize(V + sla.solve_continuous_lyapunov(K, -R))
    return V


def _van_loan(K, D, h):
    """Exact one-step propagator ``V -> Phi V Phi^T + Q`` for constant K, D."""
    n = K.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -K
    M[:n, n:] = D
    M[n:, n:] = K.T
    F = sla.expm(M * h)
    Phi = F[n:, n:].T
    Q = Phi @ F[:n, n:]
    return Phi, symmetrize(Q)


def exact_step(K, D, h: float):
    """Return ``(Phi, Q)`` with ``V(t+h) = Phi V(t) Phi^T + Q`` for constant K.

    Long steps are built by repeated squaring of a short base step so that
    the augmented exponential never contains growing blocks.
    """
    K = np.asarray(K, dtype=float)
    D = symmetrize(D)
    rate = max(np.abs(np.linalg.eigvals(K)).max(), 1e-300)
    k = max(0, int(np.ceil(np.log2(max(rate * h, 1.0)))))
    Phi, Q = _van_loan(K, D, h / 2**k)
    for _ in range(k):
        Q = symmetrize(Phi @ Q @ Phi.T + Q)
        Phi = Phi @ Phi
    return Phi, Q


DriftLike = Union[np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True)
class Trajectory:
    """Covariance matrices sampled on a time grid."""

    times: np.ndarray
    covariances: np.ndarray  # shape (len(times), 2N, 2N)
    min_nu: np.ndarray

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i):
        return self.covariances[i]


def propagate_covariance(
    K_of_t: DriftLike,
    D,
    V0,
    time_grid,
    method: str = "auto",
    rtol: float = 1e-9,
    atol: float = 1e-12,
    check: bool = True,
) -> Trajectory:
    """Integrate ``dV/dt = K(t) V + V K(t)^T + D`` on ``time_grid``.

    Parameters
    ----------
    K_of_t : array or callable
        Constant drift matrix, or a function ``t -> K(t)``.
    D : array
        Diffusion matrix (constant).
    V0 : array
        Initial covariance at ``time_grid[0]``; must be physical.
    time_grid : array
        Strictly increasing sample times.
    method : {"auto", "exact", "rk"}
        ``"exact"`` uses the matrix-exponential propagator (constant ``K``
        only); ``"rk"`` uses the adaptive DOP853 Runge-Kutta pair. ``"auto"``
        picks ``"exact"`` for constant drift.
    check : bool
        Raise :class:`PhysicalityError` if any sampled state has a symplectic
        eigenvalue below ``1/2 - 1e-6``.

    Returns
    -------
    Trajectory
    """
    t = np.asarray(time_grid, dtype=float)
    if t.ndim != 1 or len(t) < 1 or np.any(np.diff(t) <= 0):
        raise ArgumentError("time grid must be a strictly increasing 1-D array")
    D = symmetrize(D)
    V0 = symmetrize(V0)
    _check_square_even(V0)
    check_physical(V0, TRAJECTORY_TOL, "initial covariance")
    constant = not callable(K_of_t)
    if method == "auto":
        method = "exact" if constant else "rk"
    if method == "exact" and not constant:
        raise ArgumentError("exact propagation requires a constant drift matrix")
    n = V0.shape[0]
    out = np.empty((len(t), n, n))
    out[0] = V0
    if method == "exact":
        K = np.asarray(K_of_t, dtype=float)
        V = V0
        cache = {}
        for i in range(1, len(t)):
            h = t[i] - t[i - 1]
            key = round(h / t[-1], 12) if t[-1] else h
            if key not in cache:
                cache[key] = exact_step(K, D, h)
            Phi, Q = cache[key]
            V = symmetrize(Phi @ V @ Phi.T + Q)
            out[i] = V
    elif method == "rk":
        Kf = (lambda s: K_of_t) if constant else K_of_t

        def rhs(s, y):
            Vs = y.reshape(n, n)
            Ks = Kf(s)
            return (Ks @ Vs + Vs @ Ks.T + D).ravel()

        sol = solve_ivp(rhs, (t[0], t[-1]), V0.ravel(), t_eval=t, method="DOP853",
                        rtol=rtol, atol=atol)
        if sol.status != 0 or sol.y.shape[1] != len(t):
            stamp = sol.t[-1] if len(sol.t) else t[0]
            raise IntegrationError(f"integration failed at t = {stamp:.6g}: {sol.message}",
                                   time=stamp)
        for i in range(len(t)):
            out[i] = symmetrize(sol.y[:, i].reshape(n, n))
    else:
        raise ArgumentError(f"unknown propagation method {method!r}")
    nus = np.array([min_symplectic_eigenvalue(V) for V in out])
    if check:
        bad = np.nonzero(nus < 0.5 - TRAJECTORY_TOL)[0]
        if len(bad):
            i = bad[0]
            raise PhysicalityError(
                f"covariance became unphysical at t = {t[i]:.6g}: min nu = {nus[i]:.9g}"
            )
    return Trajectory(times=t, covariances=out, min_nu=nus)


@dataclass(frozen=True)
class BasisPermutation:
    """Reordering of quadrature slots.

    ``perm[k]`` is the index, in the source ordering, of the quadrature that
    lands in canonical slot ``k``. ``labels`` names the source slots.
    """

    perm: tuple
    labels: tuple = ()

    def __post_init__(self):
        p = np.asarray(self.perm)
        if sorted(p.tolist()) != list(range(len(p))):
            raise ArgumentError(f"not a permutation: {self.perm}")

    @classmethod
    def identity(cls, dim: int, labels=()):
        return cls(tuple(range(dim)), tuple(labels))

    @classmethod
    def from_labels(cls, source_labels, canonical_labels):
        src = list(source_labels)
        return cls(tuple(src.index(c) for c in canonical_labels), tuple(src))

    @property
    def matrix(self) -> np.ndarray:
        """Permutation matrix ``P`` with ``x_canonical = P x_source``."""
        n = len(self.perm)
        P = np.zeros((n, n))
        P[np.arange(n), self.perm] = 1.0
        return P

    def inverse(self) -> "BasisPermutation":
        inv = np.argsort(self.perm)
        return BasisPermutation(tuple(int(i) for i in inv))

    def apply_vector(self, x):
        return np.asarray(x)[list(self.perm)]

    def apply_matrix(self, A):
        """Transform a matrix acting in the source basis to the canonical one."""
        p = list(self.perm)
        return np.asarray(A)[np.ix_(p, p)]
