"""Quadratic-Gaussian matching with omitted dimensions.

Men's and women's types are zero-mean Gaussian vectors and a couple's
surplus is ``x' A y``.  In the continuum the stable matching is an affine
map ``y = T x + xi`` with ``E[xi | x] = 0``; here the continuum is
approximated by N men and N women matched exactly (everybody marries), and
``T`` is recovered by least squares over the realized couples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import max_weight_perfect_matching
from .exceptions import DimensionError, DomainError, RankError, SizeError

DEFAULT_CAP = 2000


@dataclass(frozen=True)
class QuadraticSpec:
    A: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    N: int
    observed_dims: int

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        sx = np.atleast_2d(np.asarray(self.sigma_x, dtype=float))
        sy = np.atleast_2d(np.asarray(self.sigma_y, dtype=float))
        d = A.shape[0]
        if A.shape != (d, d) or sx.shape != (d, d) or sy.shape != (d, d):
            raise DimensionError("A, sigma_x and sigma_y must all be square of the same size")
        for name, cov in (("sigma_x", sx), ("sigma_y", sy)):
            if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() <= 0:
                raise DomainError(f"{name} must be symmetric positive definite")
        if int(self.N) < 1:
            raise DomainError("N must be positive")
        if not 1 <= int(self.observed_dims) <= d:
            raise DomainError(f"observed_dims must lie in [1, {d}]")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "sigma_x", sx)
        object.__setattr__(self, "sigma_y", sy)

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class AffineMapEstimate:
    T_hat: np.ndarray
    residual_cov: np.ndarray
    residual_mean: np.ndarray


def simulate_quadratic_market(spec: QuadraticSpec, seed, cap: int = DEFAULT_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Draw N men and N women and match them to maximize total ``x' A y``.

    Returns row-aligned arrays ``(x, y)`` of shape (N, dim): ``y[k]`` is the
    wife of ``x[k]``.
    """
    if spec.N > cap:
        raise SizeError(f"N={spec.N} exceeds the cap of {cap}")
    rng = np.random.default_rng(seed)
    zeros = np.zeros(spec.dim)
    x = rng.multivariate_normal(zeros, spec.sigma_x, size=spec.N, method="cholesky")
    y = rng.multivariate_normal(zeros, spec.sigma_y, size=spec.N, method="cholesky")
    wife = max_weight_perfect_matching(x @ spec.A @ y.T)
    return x, y[wife]


def estimate_affine_map(pairs, observed_dims: int) -> AffineMapEstimate:
    """Least squares of the first ``observed_dims`` components of y on those of x.

    No intercept: types have mean zero.
    """
    x, y = pairs
    x = np.asarray(x, dtype=float)[:, :observed_dims]
    y = np.asarray(y, dtype=float)[:, :observed_dims]
    if x.shape[0] < observed_dims + 1:
        raise RankError("not enough couples for the regression")
    if np.linalg.matrix_rank(x) < observed_dims:
        raise RankError("regressors are collinear")
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    T_hat = coef.T
    resid = y - x @ coef
    return AffineMapEstimate(T_hat, np.atleast_2d(np.cov(resid, rowvar=False)), resid.mean(axis=0))
