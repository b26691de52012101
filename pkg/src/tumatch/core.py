"""Domain types for bipartite TU matching markets and small summaries on them.

Types are indexed 0-based internally.  Anything that leaves the library
(CSV headers, JSON keys, error messages) uses 1-based type indices, with 0
standing for "unmatched".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import ConsistencyError, DimensionError, DomainError


def _frozen_array(values, ndim: int, name: str, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TypeSpace:
    """Numbers of observable types on each side of the market."""

    X: int
    Y: int

    def __post_init__(self):
        if int(self.X) < 1 or int(self.Y) < 1:
            raise DomainError(f"type space needs X >= 1 and Y >= 1, got ({self.X}, {self.Y})")


@dataclass(frozen=True)
class Margins:
    """Mass (or count) of men per type ``n`` and of women per type ``m``."""

    n: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        n = _frozen_array(self.n, 1, "n")
        m = _frozen_array(self.m, 1, "m")
        if np.any(n < 0) or np.any(m < 0) or not (np.all(np.isfinite(n)) and np.all(np.isfinite(m))):
            raise DomainError("margins must be finite and non-negative")
        if n.sum() <= 0 or m.sum() <= 0:
            raise DomainError("each side of the market needs positive total mass")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)

    @property
    def space(self) -> TypeSpace:
        return TypeSpace(self.n.size, self.m.size)

    def scaled(self, k: float) -> "Margins":
        return Margins(self.n * k, self.m * k)

    def is_integral(self) -> bool:
        return bool(np.all(self.n == np.round(self.n)) and np.all(self.m == np.round(self.m)))


@dataclass(frozen=True)
class MatchingPatterns:
    """Observable matching patterns: couples ``mu`` by type pair and singles.

    Masses are real numbers so the same object holds finite-market counts
    and large-market limits.
    """

    mu: np.ndarray
    mu_x0: np.ndarray
    mu_0y: np.ndarray

    def __post_init__(self):
        mu = _frozen_array(self.mu, 2, "mu")
        mu_x0 = _frozen_array(self.mu_x0, 1, "mu_x0")
        mu_0y = _frozen_array(self.mu_0y, 1, "mu_0y")
        if mu_x0.size != mu.shape[0] or mu_0y.size != mu.shape[1]:
            raise DimensionError(
                f"singles vectors of length {mu_x0.size}, {mu_0y.size} do not fit mu of shape {mu.shape}"
            )
        for name, arr in (("mu", mu), ("mu_x0", mu_x0), ("mu_0y", mu_0y)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} has non-finite entries")
            if np.any(arr < 0):
                raise DomainError(f"{name} has negative entries")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "mu_x0", mu_x0)
        object.__setattr__(self, "mu_0y", mu_0y)

    @classmethod
    def from_margins(cls, mu, margins: Margins, atol: float = 1e-12) -> "MatchingPatterns":
        """Attach singles implied by ``margins`` to the couples matrix ``mu``."""
        mu = np.asarray(mu, dtype=float)
        mu_x0 = margins.n - mu.sum(axis=1)
        mu_0y = margins.m - mu.sum(axis=0)
        if mu_x0.min(initial=0.0) < -atol or mu_0y.min(initial=0.0) < -atol:
            raise ConsistencyError("couples exceed the margins")
        return cls(mu, np.maximum(mu_x0, 0.0), np.maximum(mu_0y, 0.0))

    @property
    def space(self) -> TypeSpace:
        return TypeSpace(*self.mu.shape)

    @property
    def margins(self) -> Margins:
        return Margins(self.mu.sum(axis=1) + self.mu_x0, self.mu.sum(axis=0) + self.mu_0y)

    @property
    def n_households(self) -> float:
        return float(self.mu.sum() + self.mu_x0.sum() + self.mu_0y.sum())

    def as_vector(self) -> np.ndarray:
        """Cells in the order vec(mu) (row-major), mu_x0, mu_0y."""
        return np.concatenate([self.mu.ravel(), self.mu_x0, self.mu_0y])

    @classmethod
    def from_vector(cls, vec, X: int, Y: int) -> "MatchingPatterns":
        vec = np.asarray(vec, dtype=float)
        if vec.size != X * Y + X + Y:
            raise DimensionError(f"vector of length {vec.size} does not fit a {X}x{Y} market")
        return cls(vec[: X * Y].reshape(X, Y), vec[X * Y : X * Y + X], vec[X * Y + X :])

    def scaled(self, k: float) -> "MatchingPatterns":
        return MatchingPatterns(self.mu * k, self.mu_x0 * k, self.mu_0y * k)


@dataclass(frozen=True)
class FiniteMarket:
    """Individual-level market: types and realized payoffs.

    ``tilde_phi[i, j]`` is the joint surplus if man ``i`` marries woman ``j``;
    ``phi_i0`` and ``phi_0j`` are the payoffs of staying single.
    """

    x_types: np.ndarray
    y_types: np.ndarray
    tilde_phi: np.ndarray
    phi_i0: np.ndarray
    phi_0j: np.ndarray
    space: Optional[TypeSpace] = field(default=None)

    def __post_init__(self):
        x_types = _frozen_array(self.x_types, 1, "x_types", dtype=np.int64)
        y_types = _frozen_array(self.y_types, 1, "y_types", dtype=np.int64)
        tilde_phi = np.array(self.tilde_phi, dtype=float).reshape(x_types.size, y_types.size)
        tilde_phi.setflags(write=False)
        phi_i0 = _frozen_array(self.phi_i0, 1, "phi_i0")
        phi_0j = _frozen_array(self.phi_0j, 1, "phi_0j")
        if phi_i0.size != x_types.size or phi_0j.size != y_types.size:
            raise DimensionError("singles payoffs do not match the number of individuals")
        for name, arr in (("tilde_phi", tilde_phi), ("phi_i0", phi_i0), ("phi_0j", phi_0j)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} has non-finite payoffs")
        space = self.space
        if space is None:
            space = TypeSpace(
                int(x_types.max(initial=-1)) + 1 or 1, int(y_types.max(initial=-1)) + 1 or 1
            )
        if x_types.size and (x_types.min() < 0 or x_types.max() >= space.X):
            raise DomainError("man type index out of range")
        if y_types.size and (y_types.min() < 0 or y_types.max() >= space.Y):
            raise DomainError("woman type index out of range")
        object.__setattr__(self, "x_types", x_types)
        object.__setattr__(self, "y_types", y_types)
        object.__setattr__(self, "tilde_phi", tilde_phi)
        object.__setattr__(self, "phi_i0", phi_i0)
        object.__setattr__(self, "phi_0j", phi_0j)
        object.__setattr__(self, "space", space)

    @property
    def n_men(self) -> int:
        return self.x_types.size

    @property
    def n_women(self) -> int:
        return self.y_types.size

    @property
    def margins(self) -> Margins:
        return Margins(
            np.bincount(self.x_types, minlength=self.space.X).astype(float),
            np.bincount(self.y_types, minlength=self.space.Y).astype(float),
        )

    def scaled(self, lam: float) -> "FiniteMarket":
        return FiniteMarket(
            self.x_types, self.y_types, self.tilde_phi * lam, self.phi_i0 * lam, self.phi_0j * lam, self.space
        )


def supermodular_core(phi) -> float:
    """Double difference phi_11 + phi_22 - phi_12 - phi_21 of a 2x2 matrix."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (2, 2):
        raise DimensionError(f"supermodular core needs a 2x2 matrix, got shape {phi.shape}")
    return float(phi[0, 0] + phi[1, 1] - phi[0, 1] - phi[1, 0])


def aggregate_matching(
    matches: Iterable[tuple[int, int]],
    market: FiniteMarket,
    space: Optional[TypeSpace] = None,
    single_men: Optional[Sequence[int]] = None,
    single_women: Optional[Sequence[int]] = None,
) -> MatchingPatterns:
    """Count individual matches into type-level matching patterns.

    If the singles lists are omitted, every individual not in ``matches`` is
    single.  If given, matches and singles must partition each side.
    """
    space = space or market.space
    I, J = market.n_men, market.n_women
    man_seen = np.zeros(I, dtype=bool)
    woman_seen = np.zeros(J, dtype=bool)
    mu = np.zeros((space.X, space.Y))
    for i, j in matches:
        if not (0 <= i < I and 0 <= j < J):
            raise ConsistencyError(f"match ({i}, {j}) refers to a non-existent individual")
        if man_seen[i]:
            raise ConsistencyError(f"man {i} appears more than once")
        if woman_seen[j]:
            raise ConsistencyError(f"woman {j} appears more than once")
        man_seen[i] = woman_seen[j] = True
        mu[market.x_types[i], market.y_types[j]] += 1

    def _singles(listed, seen, kind):
        if listed is None:
            return ~seen
        flags = np.zeros(seen.size, dtype=bool)
        for k in listed:
            if seen[k] or flags[k]:
                raise ConsistencyError(f"{kind} {k} appears more than once")
            flags[k] = True
        if not np.all(flags | seen):
            raise ConsistencyError(f"some {kind} are neither matched nor single")
        return flags

    men_single = _singles(single_men, man_seen, "man")
    women_single = _singles(single_women, woman_seen, "woman")
    mu_x0 = np.bincount(market.x_types[men_single], minlength=space.X).astype(float)
    mu_0y = np.bincount(market.y_types[women_single], minlength=space.Y).astype(float)
    return MatchingPatterns(mu, mu_x0, mu_0y)


def surplus_mean_variance(phi, mu: MatchingPatterns, include_singles: bool = True) -> tuple[float, float]:
    """Mean and variance of the systematic surplus across households.

    With ``include_singles`` (the default) every household counts, couples
    with weight ``mu_xy`` and surplus ``phi_xy``, singles with weight
    ``mu_x0`` / ``mu_0y`` and surplus 0.  Otherwise the distribution is
    taken over couples only.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != mu.mu.shape:
        raise DimensionError(f"phi has shape {phi.shape}, matching patterns {mu.mu.shape}")
    if mu.mu.sum() <= 0:
        raise DomainError("no couples: surplus distribution undefined")
    if include_singles:
        weights = mu.as_vector()
        values = np.concatenate([phi.ravel(), np.zeros(mu.mu_x0.size + mu.mu_0y.size)])
    else:
        weights = mu.mu.ravel()
        values = phi.ravel()
    w = weights / weights.sum()
    mean = float(w @ values)
    var = float(w @ (values - mean) ** 2)
    return mean, var
