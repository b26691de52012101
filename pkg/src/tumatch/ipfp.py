"""Large-market equilibrium of the logit (Choo-Siow) separable model.

The equilibrium matching solves

    mu_xy = sqrt(mu_x0 * mu_0y) * exp(phi_xy / 2)
    n_x   = sum_y mu_xy + mu_x0
    m_y   = sum_x mu_xy + mu_0y.

Writing a_x = sqrt(mu_x0), b_y = sqrt(mu_0y) and K = exp(phi / 2), the row
constraints become the scalar quadratics a_x**2 + a_x (K b)_x = n_x, solved
in closed form; the solver alternates between rows and columns.
"""

from __future__ import annotations

import logging

import numpy as np

from .core import Margins, MatchingPatterns
from .exceptions import ConvergenceError, DimensionError, DomainError, ZeroCellError

log = logging.getLogger(__name__)

# slack allowed for round-off when checking that the residual never increases
_MONOTONE_SLACK = 1e-12


def _positive_root(linear: np.ndarray, const: np.ndarray) -> np.ndarray:
    # root of a**2 + linear * a = const, written to avoid cancellation
    return 2.0 * const / (linear + np.sqrt(linear * linear + 4.0 * const))


def ipfp_solve(phi, margins: Margins, tol: float = 1e-10, max_iter: int = 100_000) -> MatchingPatterns:
    """Solve for the equilibrium matching patterns given surplus and margins.

    Masses come back in the units of ``margins``.  Convergence is declared
    when the largest absolute violation of the margin equations is below
    ``tol``.
    """
    phi = np.asarray(phi, dtype=float)
    n, m = margins.n, margins.m
    if phi.shape != (n.size, m.size):
        raise DimensionError(f"phi of shape {phi.shape} does not match margins {(n.size, m.size)}")
    if np.any(n <= 0) or np.any(m <= 0):
        raise DomainError("ipfp needs strictly positive margins")
    if tol <= 0:
        raise DomainError("tol must be positive")
    K = np.exp(phi / 2.0)
    a = np.sqrt(n / 2.0)
    b = np.sqrt(m / 2.0)
    previous = np.inf
    residual = np.inf
    for it in range(1, max_iter + 1):
        a = _positive_root(K @ b, n)
        b = _positive_root(K.T @ a, m)
        # columns hold exactly after the b-step; rows carry the residual
        residual = float(np.max(np.abs(a * a + a * (K @ b) - n)))
        if residual > previous * (1.0 + _MONOTONE_SLACK) + _MONOTONE_SLACK * n.max():
            raise ConvergenceError("ipfp residual increased", residual, it)
        previous = residual
        if residual <= tol:
            log.debug("ipfp converged in %d iterations, residual %.3e", it, residual)
            break
    else:
        raise ConvergenceError("ipfp did not converge", residual, max_iter)
    mu = np.outer(a, b) * K
    return MatchingPatterns(mu, a * a, b * b)


def choo_siow_utilities(mu: MatchingPatterns) -> tuple[np.ndarray, np.ndarray]:
    """Systematic utilities U = log(mu_xy / mu_x0) and V = log(mu_xy / mu_0y)."""
    _require_positive(mu)
    U = np.log(mu.mu / mu.mu_x0[:, None])
    V = np.log(mu.mu / mu.mu_0y[None, :])
    return U, V


def choo_siow_residual(phi, mu: MatchingPatterns, margins: Margins) -> float:
    """Largest absolute violation of the equilibrium and scarcity equations."""
    phi = np.asarray(phi, dtype=float)
    X, Y = mu.mu.shape
    if phi.shape != (X, Y) or margins.n.size != X or margins.m.size != Y:
        raise DimensionError("phi, matching patterns and margins have inconsistent shapes")
    match_eq = mu.mu - np.sqrt(np.outer(mu.mu_x0, mu.mu_0y)) * np.exp(phi / 2.0)
    rows = mu.mu.sum(axis=1) + mu.mu_x0 - margins.n
    cols = mu.mu.sum(axis=0) + mu.mu_0y - margins.m
    return float(max(np.abs(match_eq).max(), np.abs(rows).max(), np.abs(cols).max()))


def _require_positive(mu: MatchingPatterns) -> None:
    for (x, y), value in np.ndenumerate(mu.mu):
        if value <= 0:
            raise ZeroCellError((x + 1, y + 1))
    for x, value in enumerate(mu.mu_x0):
        if value <= 0:
            raise ZeroCellError((x + 1, 0))
    for y, value in enumerate(mu.mu_0y):
        if value <= 0:
            raise ZeroCellError((0, y + 1))
