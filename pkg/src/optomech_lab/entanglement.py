"""Entanglement measures for Gaussian states.

Bipartite logarithmic negativity, one-vs-two bipartitions of three-mode
states, and the residual Gaussian contangle built from the convex roof
of the squared logarithmic negativity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from . import gaussian_core as gc
from .errors import ArgumentError, ConvergenceError, SymmetryError


@dataclass(frozen=True)
class Bipartition:
    side_a: tuple
    side_b: tuple

    def __post_init__(self):
        a, b = set(self.side_a), set(self.side_b)
        if not a or not b:
            raise ArgumentError("both sides of a bipartition must be non-empty")
        if a & b:
            raise ArgumentError("bipartition sides must be disjoint")

    @classmethod
    def of(cls, a, b):
        return cls(tuple(np.atleast_1d(a).tolist()), tuple(np.atleast_1d(b).tolist()))


def _as_bipartition(bipartition, side_b=None) -> Bipartition:
    if isinstance(bipartition, Bipartition):
        return bipartition
    if side_b is None:
        raise ArgumentError("pass a Bipartition or both mode sets")
    return Bipartition.of(bipartition, side_b)


def negativity_exponent(V, bipartition, side_b=None) -> float:
    """``-ln(2 nu~)`` with ``nu~`` the smallest symplectic eigenvalue of the
    partially transposed reduced state; positive iff entangled."""
    bp = _as_bipartition(bipartition, side_b)
    modes = list(bp.side_a) + list(bp.side_b)
    Vr = gc.reduce(V, sorted(modes))
    order = sorted(modes)
    flip = [order.index(m) for m in bp.side_b]
    nu = gc.min_symplectic_eigenvalue(gc.partial_transpose(Vr, flip))
    return float(-np.log(2 * nu))


def log_negativity(V, bipartition, side_b=None, check: bool = True) -> float:
    """Logarithmic negativity ``E = max(0, -ln 2 nu~)``.

    Parameters
    ----------
    V : array
        Covariance matrix (vacuum variance 1/2).
    bipartition : Bipartition or sequence of modes
        Either a :class:`Bipartition` or side A, with side B passed as
        ``side_b``.  Modes outside both sides are traced out.

    Raises
    ------
    PhysicalityError
        if ``V`` is unphysical and ``check`` is true.
    """
    if check:
        gc.check_physical(V, gc.TRAJECTORY_TOL)
    return max(0.0, negativity_exponent(V, bipartition, side_b))


def pairwise_log_negativities(V, labels: Sequence[str]) -> dict:
    """``E`` for every pair of modes, keyed by concatenated labels."""
    out = {}
    n = len(labels)
    for i in range(n):
        for j in range(i + 1, n):
            out[labels[i] + labels[j]] = log_negativity(V, [i], [j])
    return out


@dataclass(frozen=True)
class TripartiteReport:
    """One-vs-two log-negativities ``(E_{0|12}, E_{1|02}, E_{2|01})``."""

    e_one_vs_two: tuple
    genuine: bool
    g_tri: Optional[float] = None
    g_tri_is_upper_bound: bool = True
    focus: Optional[tuple] = None


def tripartite_report(V, compute_g_tri: bool = False, restarts: int = 20, seed: int = 0,
                      symmetric_pair=(0, 2), symmetry_tol: float = 1e-6) -> TripartiteReport:
    """Entanglement structure of a three-mode Gaussian state.

    The witness of genuine tripartite inseparability used here is that
    every one-vs-two bipartition has positive log-negativity.

    With ``compute_g_tri`` the residual contangle
    ``min over (i, j, k) of G_{i|jk} - G_{i|j} - G_{i|k}`` is evaluated with
    ``G`` the Gaussian convex roof of the squared log-negativity.  This
    requires the two modes in ``symmetric_pair`` to be exchangeable
    within ``symmetry_tol`` (see :func:`exchange_asymmetry`).

    Raises
    ------
    SymmetryError
        if ``compute_g_tri`` is set and the state is not symmetric.
    """
    gc.check_physical(V, gc.TRAJECTORY_TOL)
    if gc.n_modes(V) != 3:
        raise ArgumentError("tripartite_report needs a three-mode state")
    es = tuple(log_negativity(V, [i], [j for j in range(3) if j != i], check=False)
               for i in range(3))
    genuine = all(e > 0 for e in es)
    if not compute_g_tri:
        return TripartiteReport(e_one_vs_two=es, genuine=genuine)
    if not genuine:
        return TripartiteReport(e_one_vs_two=es, genuine=False, g_tri=0.0,
                                g_tri_is_upper_bound=False)
    if exchange_asymmetry(V, symmetric_pair) > symmetry_tol:
        raise SymmetryError("state is not symmetric under exchange of the chosen modes")
    # exchange symmetry makes the focus on the partner mode redundant
    values = {}
    for focus in _focus_orders(symmetric_pair):
        a, b, c = focus
        g_a_bc = gaussian_contangle(V, [a], [b, c], restarts=restarts, seed=seed)
        g_a_b = gaussian_contangle(V, [a], [b], restarts=restarts, seed=seed)
        g_a_c = gaussian_contangle(V, [a], [c], restarts=restarts, seed=seed)
        values[focus] = g_a_bc - g_a_b - g_a_c
    best = None
    for focus, val in values.items():
        if best is None or val < best[0] - 1e-9:
            best = (val, focus)
    return TripartiteReport(e_one_vs_two=es, genuine=True, g_tri=max(best[0], 0.0),
                            g_tri_is_upper_bound=True, focus=best[1])


def exchange_asymmetry(V, pair) -> float:
    """Relative distance between ``V`` and its image under exchange of ``pair``.

    The exchange may be composed with a phase-space rotation by pi of one
    member, which is local and leaves every entanglement measure unchanged.
    """
    n = gc.n_modes(V)
    i, j = pair
    swap = list(range(n))
    swap[i], swap[j] = j, i
    idx = np.array([[2 * m, 2 * m + 1] for m in swap]).ravel()
    scale = np.max(np.abs(V))
    best = np.inf
    for sign in (1.0, -1.0):
        s = np.ones(2 * n)
        s[2 * j:2 * j + 2] = sign
        W = V * np.outer(s, s)
        best = min(best, np.max(np.abs(W[np.ix_(idx, idx)] - W)) / scale)
    return float(best)


def _focus_orders(symmetric_pair=(0, 2)):
    """Focus choices in the order (C, M, A) of canonical modes (M, C, A).

    The second member of ``symmetric_pair`` is dropped: its residual
    contangle equals that of its exchange partner.
    """
    orders = [(1, 0, 2), (0, 1, 2), (2, 0, 1)]
    return [f for f in orders if f[0] != symmetric_pair[1]]


# --------------------------------------------------------------------------
# Gaussian convex roof of the squared log-negativity


def williamson(V):
    """Williamson form ``V = S diag(nu, nu) S^T`` in canonical ordering.

    Returns ``(nu, S)`` with ``S`` symplectic and ``nu`` ascending.
    """
    V = gc.symmetrize(V)
    n = V.shape[0] // 2
    Om = gc.symplectic_form(n)
    sq = np.real(sla.sqrtm(V))
    isq = np.linalg.inv(sq)
    A = isq @ Om @ isq
    T, Z = sla.schur(A, output="real")
    # each 2x2 block of T is [[0, a], [-a, 0]]; arrange so that a > 0
    nu = np.empty(n)
    for k in range(n):
        a = T[2 * k, 2 * k + 1]
        if a < 0:
            Z[:, [2 * k, 2 * k + 1]] = Z[:, [2 * k + 1, 2 * k]]
            a = -a
        nu[k] = 1.0 / a
    order = np.argsort(nu)
    cols = np.array([[2 * k, 2 * k + 1] for k in order]).ravel()
    Z = Z[:, cols]
    nu = nu[order]
    Dh = np.diag(np.repeat(1.0 / np.sqrt(nu), 2))
    S = sq @ Z @ Dh
    return nu, S


def _pure_from_params(x, n):
    """Pure covariance from ``n (n + 1)`` real parameters.

    ``U = L L^T`` (Cholesky factor ``L`` from the first ``n(n+1)/2``
    entries, diagonal via exp) and symmetric ``W`` from the rest.  The
    state is ``1/2 [[U^-1, U^-1 W], [W U^-1, U + W U^-1 W]]`` in
    ``(q..., p...)`` order, then reordered canonically.
    """
    m = n * (n + 1) // 2
    L = np.zeros((n, n))
    L[np.tril_indices(n)] = x[:m]
    L[np.diag_indices(n)] = np.exp(np.clip(L[np.diag_indices(n)], -30.0, 30.0))
    U = L @ L.T
    W = np.zeros((n, n))
    W[np.tril_indices(n)] = x[m:]
    W = W + W.T - np.diag(np.diag(W))
    Ui = np.linalg.inv(U)
    B = np.block([[Ui, Ui @ W], [W @ Ui, U + W @ Ui @ W]]) / 2
    idx = np.array([[k, n + k] for k in range(n)]).ravel()
    return B[np.ix_(idx, idx)]


def _params_from_pure(Vp):
    n = Vp.shape[0] // 2
    idx = np.array([[k, n + k] for k in range(n)]).ravel()
    inv = np.argsort(idx)
    B = 2 * Vp[np.ix_(inv, inv)]
    Ui = B[:n, :n]
    U = np.linalg.inv(gc.symmetrize(Ui))
    W = gc.symmetrize(U @ B[:n, n:])
    L = np.linalg.cholesky(U)
    Ld = L.copy()
    Ld[np.diag_indices(n)] = np.log(np.diag(L))
    return np.concatenate([Ld[np.tril_indices(n)], W[np.tril_indices(n)]])


def gaussian_contangle(V, side_a, side_b, restarts: int = 20, seed: int = 0,
                       maxiter: int = 200) -> float:
    """Upper bound on ``inf_{V_p <= V} E(V_p)^2`` over pure Gaussian ``V_p``.

    Modes outside the two sides are traced out first.  For a pure input
    the feasible set is ``{V}`` and the result is ``E^2``; for a symmetric
    two-mode state the closed form ``E^2`` is returned directly.
    The search starts from the pure state ``S S^T / 2`` of the Williamson
    decomposition (always feasible) and from ``restarts - 1`` random
    feasible perturbations of it.
    """
    V = gc.symmetrize(V)
    bp = Bipartition.of(side_a, side_b)
    modes = sorted(bp.side_a + bp.side_b)
    if len(modes) < gc.n_modes(V):
        V = gc.reduce(V, modes)
        bp = Bipartition.of([modes.index(m) for m in bp.side_a],
                            [modes.index(m) for m in bp.side_b])
    n = V.shape[0] // 2

    def e2(Vp):
        return max(0.0, negativity_exponent(Vp, bp)) ** 2

    def safe_pure(x):
        with np.errstate(all="ignore"):
            try:
                Vp = _pure_from_params(x, n)
            except np.linalg.LinAlgError:
                return None
        return Vp if np.all(np.isfinite(Vp)) else None

    def objective(x):
        Vp = safe_pure(x)
        if Vp is None:
            return 1e6
        with np.errstate(all="ignore"):
            try:
                val = e2(Vp)
            except np.linalg.LinAlgError:
                return 1e6
        return val if np.isfinite(val) else 1e6

    def slack_vec(x):
        Vp = safe_pure(x)
        if Vp is None:
            return -1e6 * np.ones(2 * n)
        return np.linalg.eigvalsh(V - Vp)

    def slack(x):
        return slack_vec(x).min()

    if n == 2:
        da, db = np.linalg.det(V[:2, :2]), np.linalg.det(V[2:, 2:])
        if abs(da - db) <= 1e-9 * max(da, db):
            # symmetric two-mode state: the roof equals E^2 exactly
            return e2(V)
    nu, S = williamson(V)
    V0 = S @ S.T / 2
    if np.all(np.abs(nu - 0.5) < 1e-9):
        return e2(V)
    x0 = _params_from_pure(V0)
    rng = np.random.default_rng(seed)

    scale = max(np.abs(V).max(), 1.0)
    m = n * (n + 1) // 2
    diag_pos = set(np.cumsum(np.arange(1, n + 1)) - 1)
    span = 4.0 * np.log(2 * scale) + 4.0
    bounds = [(-span, span) if k in diag_pos else (-4 * scale, 4 * scale) for k in range(m)]
    bounds += [(-4 * scale, 4 * scale)] * m
    x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
    best = e2(V0)
    for r in range(max(restarts, 1)):
        if r == 0:
            start = x0
        else:
            start = x0 + rng.normal(scale=0.3, size=x0.size)
            # pull back toward the feasible anchor until feasible
            t = 1.0
            while slack(x0 + t * (start - x0)) < 0 and t > 1e-6:
                t *= 0.5
            start = x0 + t * (start - x0)
        res = minimize(objective, start, method="SLSQP", bounds=bounds,
                       constraints=[{"type": "ineq", "fun": lambda x: slack_vec(x) / scale}],
                       options=dict(maxiter=maxiter, ftol=1e-10))
        if slack(res.x) >= -1e-9 * scale:
            best = min(best, objective(res.x))
    if not np.isfinite(best):
        raise ConvergenceError("contangle minimisation failed on every restart")
    return float(best)
