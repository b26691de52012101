"""Monte Carlo study of the separable estimator on non-separable 2x2 markets.

A scenario is a population with its margins (symmetric or asymmetric) and
a systematic surplus (small or large modularity), plus a non-separability
share ``r2`` and a number of simulated datasets.  Each dataset is a
finite market solved exactly; its matching patterns feed the closed-form
logit estimator.

Draw ``d`` of every scenario sharing a master seed uses the same seed
(common random numbers), so scenarios can be compared draw by draw and can
run in any order or in parallel.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Literal, Optional, Sequence

import numpy as np

from .assignment import solve_assignment, type_level_duals
from .core import MatchingPatterns, Margins, aggregate_matching, supermodular_core
from .estimation import phi_closed_form
from .exceptions import DomainError, SolverError, SummaryError, TUMatchError, ZeroCellError
from .ipfp import ipfp_solve
from .stochastic import (
    Model,
    NoiseSpec,
    NuDistribution,
    build_finite_market,
    draw_bundle,
    individual_types,
    realized_market,
)

log = logging.getLogger(__name__)

SMALL_MODULARITY = np.array([[0.5, 1.0], [1.0, 1.6]])
LARGE_MODULARITY = np.array([[0.5, 1.0], [1.0, 2.5]])
R2_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
QUANTILES = (0.05, 0.25, 0.50, 0.75, 0.95)
CELLS = ("11", "12", "21", "22")
THREADS_ENV = "TUMATCH_THREADS"

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    z = (state + _GOLDEN_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, draw: int) -> int:
    """Seed of draw ``draw``: the (draw+1)-th output of a splitmix64 stream started at ``master_seed``."""
    return splitmix64((master_seed + draw * _GOLDEN_GAMMA) & _MASK64)


@dataclass(frozen=True)
class ScenarioConfig:
    population: int
    margins_kind: Literal["symmetric", "asymmetric"]
    modularity: Literal["small", "large"]
    r2: float
    model: Model = "missing_shock"
    n_draws: int = 100
    master_seed: int = 0
    nu_dist: NuDistribution = "gumbel"
    scale_singles: bool = True
    interaction_dim: int = 1

    def __post_init__(self):
        if self.margins_kind not in ("symmetric", "asymmetric"):
            raise DomainError(f"unknown margins kind {self.margins_kind!r}")
        if self.modularity not in ("small", "large"):
            raise DomainError(f"unknown modularity {self.modularity!r}")
        divisor = 4 if self.margins_kind == "symmetric" else 8
        if self.population <= 0 or self.population % divisor:
            raise DomainError(
                f"population {self.population} must be a positive multiple of {divisor} for {self.margins_kind} margins"
            )
        if self.n_draws < 1:
            raise DomainError("n_draws must be positive")
        self.noise_spec  # validates r2 and the model

    @property
    def scenario_id(self) -> str:
        return f"{self.margins_kind}-{self.modularity}-r2={self.r2:g}"

    @property
    def phi(self) -> np.ndarray:
        return (SMALL_MODULARITY if self.modularity == "small" else LARGE_MODULARITY).copy()

    @property
    def margins(self) -> Margins:
        p = self.population
        if self.margins_kind == "symmetric":
            return Margins([p // 4, p // 4], [p // 4, p // 4])
        return Margins([3 * p // 8, p // 8], [p // 8, 3 * p // 8])

    @property
    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(self.model, self.r2, self.interaction_dim, self.nu_dist, self.scale_singles)


def table1_grid(population: int = 200, n_draws: int = 100, master_seed: int = 0, **overrides) -> list[ScenarioConfig]:
    """The 24 scenarios: 2 margins x 2 modularities x 6 values of r2."""
    if population <= 0 or population % 8:
        raise DomainError(f"population must be a positive multiple of 8, got {population}")
    return [
        ScenarioConfig(population, kind, mod, r2, n_draws=n_draws, master_seed=master_seed, **overrides)
        for kind in ("symmetric", "asymmetric")
        for mod in ("small", "large")
        for r2 in R2_GRID
    ]


@dataclass(frozen=True)
class DrawResult:
    scenario_id: str
    draw: int
    seed: int
    r2: float
    phi_hat: Optional[np.ndarray]
    d2_hat: Optional[float]
    shares: np.ndarray
    u_bar: np.ndarray
    v_bar: np.ndarray
    mu_counts: MatchingPatterns
    lp_objective: float
    degenerate: bool
    error: Optional[str] = None

    def statistics(self) -> dict[str, float]:
        """Flat per-draw statistics keyed by the CSV column names."""
        out = {}
        for k, cell in enumerate(CELLS):
            x, y = divmod(k, 2)
            out[f"phi{cell}"] = float(self.phi_hat[x, y]) if self.phi_hat is not None else float("nan")
        out["d2"] = float(self.d2_hat) if self.d2_hat is not None else float("nan")
        for k, cell in enumerate(CELLS):
            out[f"share{cell}"] = float(self.shares[divmod(k, 2)])
        for k, cell in enumerate(CELLS):
            out[f"mu{cell}"] = float(self.mu_counts.mu[divmod(k, 2)])
        out["mu10"], out["mu20"] = (float(v) for v in self.mu_counts.mu_x0)
        out["mu01"], out["mu02"] = (float(v) for v in self.mu_counts.mu_0y)
        out["lp_objective"] = self.lp_objective
        return out


def run_draw(config: ScenarioConfig, draw: int) -> DrawResult:
    seed = derive_seed(config.master_seed, draw)
    nan2 = np.full((2, 2), np.nan)
    empty = MatchingPatterns(np.zeros((2, 2)), np.zeros(2), np.zeros(2))
    try:
        market = build_finite_market(config.phi, config.margins, config.noise_spec, seed)
        matching = solve_assignment(market)
    except TUMatchError as exc:
        log.warning("%s draw %d failed: %s", config.scenario_id, draw, exc)
        return DrawResult(config.scenario_id, draw, seed, config.r2, None, None, nan2, nan2, nan2, empty,
                          float("nan"), False, error=str(exc))
    counts = aggregate_matching(matching.matches, market, market.space, matching.single_men, matching.single_women)
    duals = type_level_duals(matching, market)
    try:
        phi_hat = phi_closed_form(counts)
        d2 = supermodular_core(phi_hat)
        degenerate = False
    except ZeroCellError:
        phi_hat, d2, degenerate = None, None, True
    return DrawResult(config.scenario_id, draw, seed, config.r2, phi_hat, d2, duals.shares, duals.u_bar,
                      duals.v_bar, counts, matching.objective, degenerate)


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_scenario(config: ScenarioConfig, workers: Optional[int] = None) -> list[DrawResult]:
    """All draws of a scenario, in draw order whatever the number of workers."""
    workers = workers or _default_workers()
    draws = range(config.n_draws)
    if workers <= 1:
        return [run_draw(config, d) for d in draws]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(partial(run_draw, config), draws, chunksize=max(1, config.n_draws // (4 * workers))))


@dataclass(frozen=True)
class StatSummary:
    mean: float
    sd: float
    se: float
    quantiles: tuple
    bias: float
    n: int

    def as_dict(self) -> dict:
        q = dict(zip(("q05", "q25", "q50", "q75", "q95"), self.quantiles))
        return {"mean": self.mean, "sd": self.sd, "se": self.se, **q, "bias": self.bias, "n": self.n}


@dataclass(frozen=True)
class ScenarioSummary:
    """Distribution of each per-draw statistic plus the large-market benchmark.

    The benchmark (``ipfp_mu``, ``benchmark_shares``) is the separable logit
    equilibrium at the true surplus; for ``r2 > 0`` it is the misspecified
    separable benchmark, as ``benchmark_label`` says.
    """

    scenario_id: str
    n_draws: int
    n_degenerate: int
    n_errors: int
    stats: dict
    ipfp_mu: MatchingPatterns
    ipfp_gap: float
    benchmark_shares: np.ndarray
    benchmark_label: str
    mean_cell_matches: np.ndarray = field(repr=False)


def large_market_shares(mu: MatchingPatterns) -> np.ndarray:
    """Men's share of surplus by couple type in the logit large-market limit.

    With centered Gumbel tastes a type-x man expects ``log(n_x / mu_x0)``
    whichever type he marries, and symmetrically for women.
    """
    margins = mu.margins
    g = np.log(margins.n / mu.mu_x0)
    h = np.log(margins.m / mu.mu_0y)
    return g[:, None] / (g[:, None] + h[None, :])


def _stat(values: np.ndarray, truth: float) -> StatSummary:
    values = values[np.isfinite(values)]
    n = values.size
    if n == 0:
        nan = float("nan")
        return StatSummary(nan, nan, nan, (nan,) * len(QUANTILES), nan, 0)
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if n > 1 else 0.0
    quantiles = tuple(float(q) for q in np.quantile(values, QUANTILES))
    return StatSummary(mean, sd, sd / np.sqrt(n), quantiles, mean - truth, n)


ESTIMATE_STATS = ("phi11", "phi12", "phi21", "phi22", "d2")


def summarize(results: Sequence[DrawResult], truth, margins: Margins, r2: Optional[float] = None) -> ScenarioSummary:
    """Per-statistic summaries and the comparison with the large-market benchmark.

    Surplus estimates are undefined on degenerate (zero-cell) draws, so those
    draws are left out of the ``phi*`` and ``d2`` summaries and counted in
    ``n_degenerate``; matching counts and shares use every solved draw.
    """
    if not results:
        raise SummaryError("no draws to summarize")
    truth = np.asarray(truth, dtype=float)
    solved = [r for r in results if r.error is None]
    if not solved:
        raise SummaryError(f"all {len(results)} draws of {results[0].scenario_id} failed")
    r2 = results[0].r2 if r2 is None else r2
    ipfp_mu = ipfp_solve(truth, margins)
    bench_shares = large_market_shares(ipfp_mu)
    truths = {f"phi{c}": truth[divmod(k, 2)] for k, c in enumerate(CELLS)}
    truths["d2"] = supermodular_core(truth)
    truths.update({f"share{c}": bench_shares[divmod(k, 2)] for k, c in enumerate(CELLS)})
    truths.update({f"mu{c}": ipfp_mu.mu[divmod(k, 2)] for k, c in enumerate(CELLS)})
    truths["mu10"], truths["mu20"] = ipfp_mu.mu_x0
    truths["mu01"], truths["mu02"] = ipfp_mu.mu_0y
    truths["lp_objective"] = float("nan")

    rows = [(r.degenerate, r.statistics()) for r in solved]
    stats = {}
    for name in rows[0][1]:
        values = np.array([st[name] for degenerate, st in rows if not (degenerate and name in ESTIMATE_STATS)])
        stats[name] = _stat(values, float(truths[name]))

    population = margins.n.sum() + margins.m.sum()
    lp_mean = np.array([stats[f"mu{c}"].mean for c in (*CELLS, "10", "20", "01", "02")])
    ipfp_gap = float(np.max(np.abs(lp_mean - ipfp_mu.as_vector())) / population)

    label = "well-specified separable benchmark" if r2 == 0 else "misspecified separable benchmark"
    mean_cells = np.mean([r.mu_counts.mu for r in solved], axis=0)
    return ScenarioSummary(
        results[0].scenario_id,
        len(results),
        sum(r.degenerate for r in results),
        len(results) - len(solved),
        stats,
        ipfp_mu,
        ipfp_gap,
        bench_shares,
        label,
        mean_cells,
    )


def run_grid(configs: Sequence[ScenarioConfig], workers: Optional[int] = None):
    """Run and summarize each scenario; returns ``[(config, draws, summary)]``."""
    out = []
    for config in configs:
        draws = run_scenario(config, workers)
        try:
            summary = summarize(draws, config.phi, config.margins, config.r2)
        except SummaryError as exc:
            log.warning("%s", exc)
            summary = None
        out.append((config, draws, summary))
    return out


def matched_set_at(phi, margins: Margins, bundle, sigma: float, scale_singles: bool = True) -> frozenset:
    x_types, y_types = individual_types(margins)
    market = realized_market(phi, x_types, y_types, bundle, sigma, scale_singles, margins.space)
    return solve_assignment(market).matched_set()


def matching_value(market, pairs) -> float:
    """Total realized surplus of a set of (man, woman) pairs, everyone else single."""
    men = np.ones(market.n_men, dtype=bool)
    women = np.ones(market.n_women, dtype=bool)
    total = 0.0
    for i, j in pairs:
        total += market.tilde_phi[i, j]
        men[i] = women[j] = False
    return float(total + market.phi_i0[men].sum() + market.phi_0j[women].sum())


def locate_sigma_bar(
    phi,
    margins: Margins,
    seed: int,
    sigma_grid: Sequence[float] = tuple(np.round(np.arange(0.0, 0.1001, 0.01), 10)),
    tol: float = 1e-7,
) -> tuple[float, list[frozenset]]:
    """First non-separability level at which a fixed market's matching changes.

    All shocks are drawn once; only ``sigma`` (and with it ``tau``) moves.
    Scans ``sigma_grid`` for the first point whose matching differs from
    the one at ``sigma_grid[0]``, then bisects down to ``tol``.  Returns
    ``inf`` if the matching never changes on the grid, along with the
    matched sets at every grid point.

    With a separable surplus two men of the same type can swap wives of the
    same type at no cost, so the optimum at ``sigma = 0`` is only unique up
    to such swaps.  That grid point is represented by the limit selection as
    ``sigma`` decreases to 0 (solved at ``tol / 10``), after checking that
    this selection attains the ``sigma = 0`` optimum.
    """
    x_types, y_types = individual_types(margins)
    bundle = draw_bundle(x_types.size, y_types.size, margins.space, NoiseSpec("missing_shock", 0.5), seed)

    def selection(sigma):
        if sigma > 0:
            return matched_set_at(phi, margins, bundle, sigma)
        limit = matched_set_at(phi, margins, bundle, tol / 10)
        market = realized_market(phi, x_types, y_types, bundle, 0.0, True, margins.space)
        best = solve_assignment(market)
        if matching_value(market, limit) < best.objective - 1e-9 * max(1.0, abs(best.objective)):
            raise SolverError("limit selection is not optimal at sigma = 0")
        return limit

    sets = [selection(float(s)) for s in sigma_grid]
    base = sets[0]
    for k in range(1, len(sets)):
        if sets[k] != base:
            lo, hi = float(sigma_grid[k - 1]), float(sigma_grid[k])
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if selection(mid) == base:
                    lo = mid
                else:
                    hi = mid
            return hi, sets
    return float("inf"), sets


def polynomial_bias_fit(sigmas, biases, ses) -> tuple[np.ndarray, np.ndarray]:
    """Weighted least squares of bias on (1, sigma, sigma^2); returns coefficients and standard errors."""
    sigmas = np.asarray(sigmas, dtype=float)
    design = np.column_stack([np.ones_like(sigmas), sigmas, sigmas**2])
    w = 1.0 / np.asarray(ses, dtype=float) ** 2
    xtwx = design.T @ (w[:, None] * design)
    cov = np.linalg.inv(xtwx)
    coef = cov @ design.T @ (w * np.asarray(biases, dtype=float))
    return coef, np.sqrt(np.diag(cov))
