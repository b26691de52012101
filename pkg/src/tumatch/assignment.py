"""Exact stable matching of a finite TU market.

The stable matching solves the assignment linear program

    max  sum_ij mu_ij tphi_ij + sum_i mu_i0 tphi_i0 + sum_j mu_0j tphi_0j
    s.t. each individual is matched at most once,

whose constraint matrix is totally unimodular.  Relative to everybody
staying single, a couple (i, j) gains ``tphi_ij - tphi_i0 - tphi_0j``; the
problem is solved as a square assignment on the gains padded with
zero-gain "stay single" slots, using a shortest augmenting path method
with dual potentials.

Stable payoffs (u, v) are not unique in a finite market: given the optimal
matching they form a lattice whose extreme points are the men-optimal and
women-optimal payoff vectors.  Both are computed by shortest paths on the
exchange graph, and by default the midpoint between them is reported.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .core import FiniteMarket, TypeSpace
from .exceptions import DomainError, SizeError, SolverError

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

log = logging.getLogger(__name__)

DualSelection = Literal["midpoint", "men", "women"]
BRUTE_FORCE_MAX = 8
_BF_TOL = 1e-12


@njit(cache=True)
def _min_cost_assignment(cost):
    """Shortest augmenting path assignment on a square cost matrix.

    Returns ``row_of_col`` and the row/column potentials.  Ties resolve to the
    lowest column index.
    """
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.empty(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    row_of_col = p[1:] - 1
    return row_of_col, u[1:], v[1:]


def max_weight_perfect_matching(weights) -> np.ndarray:
    """Column assigned to each row in a maximum-weight perfect matching."""
    w = np.ascontiguousarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DomainError(f"need a square weight matrix, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite")
    n = w.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    row_of_col, _, _ = _min_cost_assignment(-w)
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[row_of_col] = np.arange(n)
    return col_of_row


@dataclass(frozen=True)
class FiniteMatching:
    """Stable matching of a finite market with stable payoffs.

    ``u`` and ``v`` are ``None`` when only the primal was computed.
    ``partner_of_man[i]`` is -1 for a single man.
    """

    matches: list
    single_men: list
    single_women: list
    u: Optional[np.ndarray]
    v: Optional[np.ndarray]
    objective: float
    partner_of_man: np.ndarray
    partner_of_woman: np.ndarray

    def matched_set(self) -> frozenset:
        return frozenset(self.matches)


def _from_partners(market: FiniteMarket, partner_of_man: np.ndarray) -> tuple:
    I, J = market.n_men, market.n_women
    partner_of_woman = np.full(J, -1, dtype=np.int64)
    matched_men = np.flatnonzero(partner_of_man >= 0)
    partner_of_woman[partner_of_man[matched_men]] = matched_men
    matches = [(int(i), int(partner_of_man[i])) for i in matched_men]
    single_men = [int(i) for i in np.flatnonzero(partner_of_man < 0)]
    single_women = [int(j) for j in np.flatnonzero(partner_of_woman < 0)]
    objective = (
        float(sum(market.tilde_phi[i, j] for i, j in matches))
        + float(market.phi_i0[single_men].sum())
        + float(market.phi_0j[single_women].sum())
    )
    return partner_of_woman, matches, single_men, single_women, objective


def _bellman_ford(weights: np.ndarray, source: int) -> np.ndarray:
    """Shortest path lengths from ``source`` on a dense graph (``inf`` = no edge).

    Separable markets have many zero-length cycles (same-type partners are
    interchangeable) which round-off can make slightly negative, so
    improvements below ``_BF_TOL`` relative to the payoff scale are ignored.
    """
    n = weights.shape[0]
    finite = weights[np.isfinite(weights)]
    tol = _BF_TOL * max(1.0, float(np.abs(finite).max(initial=0.0)))
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    for _ in range(n + 1):
        candidate = np.min(dist[:, None] + weights, axis=0)
        improve = candidate < dist - tol
        if not improve.any():
            return dist
        dist = np.where(improve, candidate, dist)
    raise SolverError("negative cycle in the exchange graph: matching is not optimal")


def payoff_bounds(market: FiniteMarket, partner_of_man: np.ndarray, partner_of_woman: np.ndarray):
    """Men's highest and lowest stable payoffs for a given optimal matching.

    Stable payoffs are pinned down by the men's ``u``: a matched woman gets
    the rest of her couple's surplus and a single woman her single payoff.
    The remaining stability conditions are difference constraints on ``u``,
    so the extremes are shortest path lengths from an anchor node.
    """
    I = market.n_men
    tp = market.tilde_phi
    src = I
    W = np.full((I + 1, I + 1), np.inf)
    matched = partner_of_man >= 0
    single_women = partner_of_woman < 0

    # u_k <= u_i + tphi[k, j_k] - tphi[i, j_k]: man i must not envy k's partner j_k
    ks = np.flatnonzero(matched)
    jk = partner_of_man[ks]
    W[:I, ks] = tp[ks, jk][None, :] - tp[:, jk]
    W[ks, ks] = np.inf
    # upper bounds: v_jk = tphi[k, j_k] - u_k >= tphi_0jk, single men pinned at tphi_k0
    W[src, ks] = tp[ks, jk] - market.phi_0j[jk]
    singles = np.flatnonzero(~matched)
    W[src, singles] = market.phi_i0[singles]
    # lower bounds: individual rationality and no blocking with single women
    lower = market.phi_i0.copy()
    if single_women.any():
        gains = tp[:, single_women] - market.phi_0j[single_women][None, :]
        lower = np.maximum(lower, gains.max(axis=1))
    W[:I, src] = -lower
    W[src, src] = np.inf

    u_max = _bellman_ford(W, src)[:I]
    u_min = -_bellman_ford(W.T, src)[:I]
    return u_max, u_min


def _women_payoffs(market: FiniteMarket, u: np.ndarray, partner_of_woman: np.ndarray) -> np.ndarray:
    v = market.phi_0j.copy()
    matched = np.flatnonzero(partner_of_woman >= 0)
    men = partner_of_woman[matched]
    v[matched] = market.tilde_phi[men, matched] - u[men]
    return v


def dual_residuals(market: FiniteMarket, matching: FiniteMatching) -> dict:
    """Largest violations of dual feasibility and complementary slackness, plus the duality gap."""
    u, v = matching.u, matching.v
    infeas = max(
        float(np.max(market.tilde_phi - u[:, None] - v[None, :], initial=-np.inf)),
        float(np.max(market.phi_i0 - u, initial=-np.inf)),
        float(np.max(market.phi_0j - v, initial=-np.inf)),
        0.0,
    )
    slack = [abs(u[i] + v[j] - market.tilde_phi[i, j]) for i, j in matching.matches]
    slack += [abs(u[i] - market.phi_i0[i]) for i in matching.single_men]
    slack += [abs(v[j] - market.phi_0j[j]) for j in matching.single_women]
    return {
        "feasibility": infeas,
        "slackness": float(max(slack, default=0.0)),
        "duality_gap": abs(float(u.sum() + v.sum()) - matching.objective),
    }


def solve_assignment(market: FiniteMarket, tol: float = 1e-9, duals: DualSelection = "midpoint") -> FiniteMatching:
    """Stable matching and stable payoffs of a finite market.

    Parameters
    ----------
    market : FiniteMarket
    tol : float
        Maximum accepted violation of dual feasibility and complementary
        slackness, checked after solving.
    duals : {"midpoint", "men", "women"}
        Which stable payoff vector to report.  The two extremes of the
        lattice favour one side each; ``"midpoint"`` averages them.

    Raises
    ------
    SolverError
        If the reported payoffs violate stability by more than ``tol``.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    I, J = market.n_men, market.n_women
    N = I + J
    gains = np.zeros((N, N))
    gains[:I, :J] = market.tilde_phi - market.phi_i0[:, None] - market.phi_0j[None, :]
    col_of_row = max_weight_perfect_matching(gains)
    partner_of_man = col_of_row[:I].copy()
    partner_of_man[partner_of_man >= J] = -1
    partner_of_woman, matches, single_men, single_women, objective = _from_partners(market, partner_of_man)

    u_max, u_min = payoff_bounds(market, partner_of_man, partner_of_woman)
    if duals == "men":
        u = u_max
    elif duals == "women":
        u = u_min
    elif duals == "midpoint":
        u = 0.5 * (u_max + u_min)
    else:
        raise DomainError(f"unknown dual selection {duals!r}")
    v = _women_payoffs(market, u, partner_of_woman)
    matching = FiniteMatching(
        matches, single_men, single_women, u, v, objective, partner_of_man, partner_of_woman
    )
    res = dual_residuals(market, matching)
    if res["feasibility"] > tol or res["slackness"] > tol:
        raise SolverError(f"stable payoffs violate tolerance {tol}: {res}")
    return matching


def brute_force_matching(market: FiniteMarket) -> FiniteMatching:
    """Best matching by enumerating every partial matching (I, J <= 8).

    Test oracle only; payoffs are not computed.
    """
    I, J = market.n_men, market.n_women
    if I > BRUTE_FORCE_MAX or J > BRUTE_FORCE_MAX:
        raise SizeError(f"brute force limited to {BRUTE_FORCE_MAX}x{BRUTE_FORCE_MAX} markets, got {I}x{J}")
    tp, s_men, s_women = market.tilde_phi, market.phi_i0, market.phi_0j

    best_value = -np.inf
    best = None
    # choose which men marry, then which women, then how they pair up
    for k in range(min(I, J) + 1):
        for men in itertools.combinations(range(I), k):
            rest_men = s_men.sum() - s_men[list(men)].sum()
            for women in itertools.combinations(range(J), k):
                rest_women = s_women.sum() - s_women[list(women)].sum()
                for perm in itertools.permutations(women):
                    value = rest_men + rest_women + sum(tp[i, j] for i, j in zip(men, perm))
                    if value > best_value:
                        best_value = value
                        best = (men, perm)
    partner_of_man = np.full(I, -1, dtype=np.int64)
    if best is not None:
        for i, j in zip(*best):
            partner_of_man[i] = j
    partner_of_woman, matches, single_men, single_women, objective = _from_partners(market, partner_of_man)
    if I == 0 and J == 0:
        objective = 0.0
    return FiniteMatching(matches, single_men, single_women, None, None, objective, partner_of_man, partner_of_woman)


@dataclass(frozen=True)
class TypeLevelDuals:
    """Average stable payoffs and men's surplus shares by couple type.

    Cells without couples hold NaN.  ``degenerate`` flags cells where the
    average payoffs sum to a non-positive number, whose share is NaN too.
    """

    u_bar: np.ndarray
    v_bar: np.ndarray
    shares: np.ndarray
    counts: np.ndarray
    degenerate: np.ndarray


def type_level_duals(
    matching: FiniteMatching,
    market: FiniteMarket,
    space: Optional[TypeSpace] = None,
    aggregate: Literal["ratio_of_means", "mean_of_ratios"] = "ratio_of_means",
) -> TypeLevelDuals:
    if matching.u is None or matching.v is None:
        raise DomainError("matching carries no payoffs")
    space = space or market.space
    shape = (space.X, space.Y)
    counts = np.zeros(shape)
    u_sum = np.zeros(shape)
    v_sum = np.zeros(shape)
    ratio_sum = np.zeros(shape)
    if matching.matches:
        men, women = np.array(matching.matches).T
        xs, ys = market.x_types[men], market.y_types[women]
        np.add.at(counts, (xs, ys), 1.0)
        np.add.at(u_sum, (xs, ys), matching.u[men])
        np.add.at(v_sum, (xs, ys), matching.v[women])
        if aggregate == "mean_of_ratios":
            total = matching.u[men] + matching.v[women]
            with np.errstate(divide="ignore", invalid="ignore"):
                np.add.at(ratio_sum, (xs, ys), np.where(total > 0, matching.u[men] / total, np.nan))
    with np.errstate(divide="ignore", invalid="ignore"):
        u_bar = np.where(counts > 0, u_sum / counts, np.nan)
        v_bar = np.where(counts > 0, v_sum / counts, np.nan)
        total = u_bar + v_bar
        degenerate = (counts > 0) & ~(total > 0)
        if aggregate == "ratio_of_means":
            shares = np.where(total > 0, u_bar / total, np.nan)
        elif aggregate == "mean_of_ratios":
            shares = np.where(counts > 0, ratio_sum / counts, np.nan)
        else:
            raise DomainError(f"unknown aggregation {aggregate!r}")
    return TypeLevelDuals(u_bar, v_bar, shares, counts, degenerate)
