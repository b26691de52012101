"""Random draws and realized surplus matrices for finite markets.

Three data-generating processes are supported:

* ``separable``: ``phi[x_i, y_j] + eps_i[y_j] + eta_j[x_i]``;
* ``missing_shock``: ``phi + tau * (eps + eta) + sigma * nu_ij`` with a
  pair-specific shock ``nu``;
* ``missing_interaction``: ``phi + tau * (eps + eta) + sigma * c * xi_i . zeta_j / sqrt(d)``
  with standard normal vectors ``xi``, ``zeta`` of length ``d`` and
  ``c = pi / sqrt(6)`` so the interaction has the variance of one Gumbel term.

In the last two, ``tau**2 = 1 - sigma**2 / 2`` keeps the total idiosyncratic
variance at ``pi**2 / 3`` and ``r2 = sigma**2 / 2`` is the share of it due
to the non-separable term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .core import FiniteMarket, Margins, TypeSpace
from .exceptions import DimensionError, DomainError

EULER_GAMMA = float(np.euler_gamma)
GUMBEL_VARIANCE = np.pi**2 / 6

Model = Literal["separable", "missing_shock", "missing_interaction"]
NuDistribution = Literal["gumbel", "logistic"]

# order of the sub-streams spawned from one master seed
_STREAMS = ("eps", "eta", "nu", "xi", "zeta")


@dataclass(frozen=True)
class NoiseSpec:
    """How idiosyncratic surplus is generated.

    ``nu_dist="logistic"`` swaps the centered Gumbel pair shock for a
    symmetric logistic one with the same variance.  ``scale_singles``
    controls whether the singles' payoffs are multiplied by ``tau``.
    """

    model: Model = "separable"
    r2: float = 0.0
    interaction_dim: int = 1
    nu_dist: NuDistribution = "gumbel"
    scale_singles: bool = True

    def __post_init__(self):
        if self.model not in ("separable", "missing_shock", "missing_interaction"):
            raise DomainError(f"unknown noise model {self.model!r}")
        if not 0.0 <= self.r2 <= 1.0:
            raise DomainError(f"r2 must lie in [0, 1], got {self.r2}")
        if self.model == "separable" and self.r2 != 0.0:
            raise DomainError("the separable model has r2 = 0")
        if int(self.interaction_dim) < 1:
            raise DomainError("interaction_dim must be >= 1")
        if self.nu_dist not in ("gumbel", "logistic"):
            raise DomainError(f"unknown nu distribution {self.nu_dist!r}")


@dataclass(frozen=True)
class DrawBundle:
    """All random components of one finite market.

    ``eps[i, 0]`` is man i's single payoff shock and ``eps[i, y + 1]`` his
    taste shock for women of type y (0-based y); same layout for ``eta``.
    """

    eps: np.ndarray
    eta: np.ndarray
    nu: Optional[np.ndarray]
    xi: Optional[np.ndarray]
    zeta: Optional[np.ndarray]
    seed: int


def _as_generator(stream) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    return np.random.default_rng(stream)


def draw_gumbel_centered(stream, count: int) -> np.ndarray:
    """I.i.d. type-I extreme value draws with location -gamma and scale 1 (mean 0)."""
    if count < 1:
        raise DomainError("count must be >= 1")
    return _as_generator(stream).gumbel(loc=-EULER_GAMMA, scale=1.0, size=count)


def draw_logistic_matched(stream, count: int) -> np.ndarray:
    """Logistic draws, mean 0, scaled to the variance of a standard Gumbel term."""
    # var(logistic(s)) = s^2 pi^2 / 3
    return _as_generator(stream).logistic(loc=0.0, scale=1.0 / np.sqrt(2.0), size=count)


def sigma_tau_from_r2(r2: float) -> tuple[float, float]:
    if not 0.0 <= r2 <= 1.0:
        raise DomainError(f"r2 must lie in [0, 1], got {r2}")
    return float(np.sqrt(2.0 * r2)), float(np.sqrt(1.0 - r2))


def tau_from_sigma(sigma: float) -> float:
    if not 0.0 <= sigma <= np.sqrt(2.0):
        raise DomainError(f"sigma must lie in [0, sqrt(2)], got {sigma}")
    return float(np.sqrt(max(1.0 - sigma**2 / 2.0, 0.0)))


def individual_types(margins: Margins) -> tuple[np.ndarray, np.ndarray]:
    """Type index of every individual, sorted by type."""
    if not margins.is_integral():
        raise DomainError("finite markets need integer margins")
    x_types = np.repeat(np.arange(margins.n.size), margins.n.astype(np.int64))
    y_types = np.repeat(np.arange(margins.m.size), margins.m.astype(np.int64))
    return x_types, y_types


def draw_bundle(n_men: int, n_women: int, space: TypeSpace, spec: NoiseSpec, seed: int) -> DrawBundle:
    """Draw every random component of a market from one master seed.

    Each component has its own sub-stream, so the draws of ``eps`` do not
    depend on whether ``nu`` or ``xi`` are needed.
    """
    gens = dict(zip(_STREAMS, (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(_STREAMS)))))
    eps = gens["eps"].gumbel(-EULER_GAMMA, 1.0, size=(n_men, space.Y + 1))
    eta = gens["eta"].gumbel(-EULER_GAMMA, 1.0, size=(n_women, space.X + 1))
    nu = xi = zeta = None
    if spec.model == "missing_shock":
        if spec.nu_dist == "gumbel":
            nu = gens["nu"].gumbel(-EULER_GAMMA, 1.0, size=(n_men, n_women))
        else:
            nu = draw_logistic_matched(gens["nu"], n_men * n_women).reshape(n_men, n_women)
    elif spec.model == "missing_interaction":
        d = int(spec.interaction_dim)
        xi = gens["xi"].standard_normal((n_men, d))
        zeta = gens["zeta"].standard_normal((n_women, d))
    return DrawBundle(eps, eta, nu, xi, zeta, int(seed))


def realized_market(
    phi,
    x_types: np.ndarray,
    y_types: np.ndarray,
    bundle: DrawBundle,
    sigma: float = 0.0,
    scale_singles: bool = True,
    space: Optional[TypeSpace] = None,
) -> FiniteMarket:
    """Assemble the realized surplus at a given non-separability ``sigma``.

    ``tau`` follows from ``sigma``.  The non-separable term is whichever of
    ``nu`` or ``xi . zeta`` the bundle carries.
    """
    phi = np.asarray(phi, dtype=float)
    space = space or TypeSpace(*phi.shape)
    if phi.shape != (space.X, space.Y):
        raise DimensionError(f"phi of shape {phi.shape} does not match {space}")
    tau = tau_from_sigma(sigma)
    eps_y = bundle.eps[:, 1:][:, y_types]  # (I, J): eps_i[y_j]
    eta_x = bundle.eta[:, 1:][:, x_types].T  # (I, J): eta_j[x_i]
    tilde = phi[np.ix_(x_types, y_types)] + tau * (eps_y + eta_x)
    if sigma != 0.0:
        if bundle.nu is not None:
            tilde = tilde + sigma * bundle.nu
        elif bundle.xi is not None:
            d = bundle.xi.shape[1]
            tilde = tilde + sigma * np.sqrt(GUMBEL_VARIANCE) * (bundle.xi @ bundle.zeta.T) / np.sqrt(d)
        else:
            raise DomainError("sigma > 0 needs a bundle drawn for a non-separable model")
    single_scale = tau if scale_singles else 1.0
    return FiniteMarket(
        x_types, y_types, tilde, single_scale * bundle.eps[:, 0], single_scale * bundle.eta[:, 0], space
    )


def build_finite_market(phi, margins: Margins, spec: NoiseSpec, seed: int) -> FiniteMarket:
    """Instantiate individuals per ``margins`` and draw their realized surplus."""
    phi = np.asarray(phi, dtype=float)
    space = margins.space
    if phi.shape != (space.X, space.Y):
        raise DimensionError(f"phi of shape {phi.shape} does not match margins {space}")
    x_types, y_types = individual_types(margins)
    bundle = draw_bundle(x_types.size, y_types.size, space, spec, seed)
    sigma = sigma_tau_from_r2(spec.r2)[0] if spec.model != "separable" else 0.0
    return realized_market(phi, x_types, y_types, bundle, sigma, spec.scale_singles, space)
