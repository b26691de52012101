"""Estimating the joint surplus of the logit separable model from matching patterns.

* closed-form surplus ``log(mu_xy**2 / (mu_x0 mu_0y))`` and its
  no-singles analogue, identified only up to ``a_x + b_y``;
* delta-method covariance of the estimated surplus under multinomial
  sampling of households;
* minimum-distance (GLS) estimation of a linear surplus ``sum_k beta_k B_k``
  with an overidentification statistic;
* the 2x2 log-odds-ratio estimator of the double difference and its
  asymptotic variance, which is at least ``64 / n``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Union

import numpy as np

from .core import MatchingPatterns
from .exceptions import ConditioningError, DimensionError, DomainError, RankError, ZeroCellError
from .ipfp import _require_positive

log = logging.getLogger(__name__)

RIDGE = 1e-10
MAX_CONDITION = 1e12


def phi_closed_form(mu: MatchingPatterns) -> np.ndarray:
    """Joint surplus identified from matching patterns with singles."""
    _require_positive(mu)
    return np.log(mu.mu**2 / np.outer(mu.mu_x0, mu.mu_0y))


def phi_no_singles(mu_marriages) -> np.ndarray:
    """Surplus identified from couples only, normalized to a zero first row and column.

    Only ``phi_xy + a_x + b_y`` is identified without singles; double
    differences such as the supermodular core do not depend on the choice.
    """
    mu_marriages = np.asarray(mu_marriages, dtype=float)
    if mu_marriages.ndim != 2:
        raise DimensionError("expected a matrix of couples")
    for (x, y), value in np.ndenumerate(mu_marriages):
        if value <= 0:
            raise ZeroCellError((x + 1, y + 1))
    raw = 2.0 * np.log(mu_marriages)
    out = raw - raw[:, :1] - raw[:1, :] + raw[0, 0]
    out[0, :] = 0.0
    out[:, 0] = 0.0
    return out


def phi_jacobian(mu: MatchingPatterns) -> np.ndarray:
    """Jacobian of vec(phi_closed_form) with respect to ``mu.as_vector()``."""
    _require_positive(mu)
    X, Y = mu.mu.shape
    jac = np.zeros((X * Y, X * Y + X + Y))
    for x in range(X):
        for y in range(Y):
            row = x * Y + y
            jac[row, row] = 2.0 / mu.mu[x, y]
            jac[row, X * Y + x] = -1.0 / mu.mu_x0[x]
            jac[row, X * Y + X + y] = -1.0 / mu.mu_0y[y]
    return jac


def phi_covariance(mu: MatchingPatterns, sample_size: int) -> np.ndarray:
    """Asymptotic covariance of vec(phi_hat) when ``sample_size`` households are drawn.

    Households fall in the ``X*Y + X + Y`` cells with probabilities
    proportional to ``mu``.  The closed-form surplus is homogeneous of degree
    zero in ``mu``, so the Jacobian can be taken at the cell proportions.
    """
    if sample_size <= 0:
        raise DomainError("sample_size must be positive")
    p = mu.as_vector() / mu.n_households
    probs = MatchingPatterns.from_vector(p, *mu.mu.shape)
    jac = phi_jacobian(probs)
    s_mu = np.diag(p) - np.outer(p, p)
    cov = jac @ s_mu @ jac.T / sample_size
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class MinDistanceSpec:
    """Linear surplus model ``phi = sum_k beta_k basis[k]`` and a weighting choice.

    ``weight`` names a standard choice (``"identity"`` or ``"optimal"``) or is an explicit
    ``(X*Y, X*Y)`` weighting matrix.
    """

    basis: Sequence[np.ndarray]
    weight: Union[Literal["identity", "optimal"], np.ndarray] = "optimal"
    design: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mats = [np.asarray(b, dtype=float) for b in self.basis]
        if not mats:
            raise DimensionError("basis is empty")
        shape = mats[0].shape
        if any(b.shape != shape or b.ndim != 2 for b in mats):
            raise DimensionError("basis matrices must share one 2-D shape")
        design = np.column_stack([b.ravel() for b in mats])
        if design.shape[1] > design.shape[0]:
            raise RankError(f"{design.shape[1]} parameters for {design.shape[0]} moments")
        if np.linalg.matrix_rank(design) < design.shape[1]:
            raise RankError("basis matrices are linearly dependent")
        object.__setattr__(self, "design", design)

    @property
    def shape(self) -> tuple[int, int]:
        return np.asarray(self.basis[0]).shape


@dataclass(frozen=True)
class MinDistanceResult:
    beta_hat: np.ndarray
    cov_beta: np.ndarray
    j_stat: float
    df: int
    phi_hat: np.ndarray

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_beta))

    @property
    def p_value(self) -> float:
        from scipy.stats import chi2

        return float(chi2.sf(self.j_stat, self.df)) if self.df > 0 else float("nan")


def _safe_inverse(mat: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        log.warning("%s is ill-conditioned (cond=%.3e); adding a ridge of %g", what, cond, RIDGE)
        mat = mat + RIDGE * np.eye(mat.shape[0])
        if not np.isfinite(np.linalg.cond(mat)):
            raise ConditioningError(f"{what} is singular")
    try:
        return np.linalg.inv(mat)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"{what} is singular") from exc


def min_distance(spec: MinDistanceSpec, mu: MatchingPatterns, sample_size: int) -> MinDistanceResult:
    """Minimum-distance estimate of ``beta`` from observed matching patterns.

    The moments are ``m(beta) = design @ beta - vec(phi_hat)`` and the
    estimator minimizes ``m' W m`` in closed form.  The reported ``j_stat``
    is ``m' S^{-1} m`` at the estimate, with ``S`` the covariance of
    ``phi_hat`` from :func:`phi_covariance`; it is the minimized objective
    under the optimal weight and is asymptotically chi-squared with
    ``X*Y - K`` degrees of freedom under a correct specification.
    """
    if mu.mu.shape != spec.shape:
        raise DimensionError(f"basis is {spec.shape}, matching patterns are {mu.mu.shape}")
    phi_hat = phi_closed_form(mu)
    target = phi_hat.ravel()
    B = spec.design
    S = phi_covariance(mu, sample_size)
    S_inv = _safe_inverse(S, "surplus covariance")
    if isinstance(spec.weight, str):
        if spec.weight == "optimal":
            W = S_inv
        elif spec.weight == "identity":
            W = np.eye(B.shape[0])
        else:
            raise DomainError(f"unknown weight {spec.weight!r}")
    else:
        W = np.asarray(spec.weight, dtype=float)
        if W.shape != (B.shape[0], B.shape[0]):
            raise DimensionError(f"weight must be {B.shape[0]}x{B.shape[0]}")
    bread = _safe_inverse(B.T @ W @ B, "weighted design")
    beta = bread @ (B.T @ W @ target)
    cov_beta = bread @ (B.T @ W @ S @ W @ B) @ bread
    cov_beta = 0.5 * (cov_beta + cov_beta.T)
    resid = B @ beta - target
    j_stat = max(float(resid @ S_inv @ resid), 0.0)
    df = B.shape[0] - B.shape[1]
    if df == 0:
        j_stat = 0.0
    return MinDistanceResult(beta, cov_beta, j_stat, df, phi_hat)


def odds_ratio_phi0(mu4) -> float:
    """Twice the log odds ratio of a 2x2 table of couples."""
    mu4 = np.asarray(mu4, dtype=float)
    if mu4.shape != (2, 2):
        raise DimensionError("need a 2x2 table")
    for (x, y), value in np.ndenumerate(mu4):
        if value <= 0:
            raise ZeroCellError((x + 1, y + 1))
    return float(2.0 * np.log(mu4[0, 0] * mu4[1, 1] / (mu4[0, 1] * mu4[1, 0])))


def phi0_avar(mu4, n: int) -> tuple[float, float]:
    """Asymptotic variance of :func:`odds_ratio_phi0` with ``n`` couples, and the floor ``64 / n``.

    ``mu4`` holds cell proportions that sum to one.
    """
    mu4 = np.asarray(mu4, dtype=float)
    if mu4.shape != (2, 2):
        raise DimensionError("need a 2x2 table")
    if np.any(mu4 <= 0):
        raise DomainError("proportions must be positive")
    if abs(mu4.sum() - 1.0) > 1e-12:
        raise DomainError(f"proportions sum to {mu4.sum()!r}, not 1")
    if n <= 0:
        raise DomainError("n must be positive")
    return float(4.0 * np.sum(1.0 / mu4) / n), 64.0 / n


def phi0_avar_equal_types(d0: float, n: int) -> float:
    """Variance ``16 / (n d0 (1 - d0))`` with equally likely types, ``d0`` the share of x = y couples."""
    if not 0.0 < d0 < 1.0:
        raise DomainError("d0 must lie in (0, 1)")
    if n <= 0:
        raise DomainError("n must be positive")
    return 16.0 / (n * d0 * (1.0 - d0))


def sample_matching_patterns(mu: MatchingPatterns, sample_size: int, rng) -> MatchingPatterns:
    """Draw ``sample_size`` households from the cell proportions of ``mu``."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    p = mu.as_vector() / mu.n_households
    counts = rng.multinomial(sample_size, p)
    return MatchingPatterns.from_vector(counts.astype(float), *mu.mu.shape)
