import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tumatch.core import Margins, TypeSpace
from tumatch.exceptions import DimensionError, DomainError
from tumatch.stochastic import (
    GUMBEL_VARIANCE,
    NoiseSpec,
    build_finite_market,
    draw_bundle,
    draw_gumbel_centered,
    draw_logistic_matched,
    individual_types,
    realized_market,
    sigma_tau_from_r2,
    tau_from_sigma,
)

PHI = np.array([[0.5, 1.0], [1.0, 1.6]])
N = 200_000


def _within(sample, mean, var, k=5.0):
    # mean within k standard errors; variance within k standard errors of the sample variance
    se_mean = np.sqrt(var / sample.size)
    fourth = np.mean((sample - sample.mean()) ** 4)
    se_var = np.sqrt((fourth - var**2) / sample.size)
    assert abs(sample.mean() - mean) < k * se_mean
    assert abs(sample.var() - var) < k * se_var


def test_centered_gumbel_moments():
    _within(draw_gumbel_centered(1, N), 0.0, GUMBEL_VARIANCE)


def test_matched_logistic_moments_and_symmetry():
    sample = draw_logistic_matched(2, N)
    _within(sample, 0.0, GUMBEL_VARIANCE)
    assert abs(np.mean(sample**3)) < 0.05


def test_gumbel_count_validation():
    with pytest.raises(DomainError):
        draw_gumbel_centered(0, 0)


def test_sigma_tau():
    sigma, tau = sigma_tau_from_r2(0.5)
    assert sigma == pytest.approx(1.0)
    assert tau == pytest.approx(np.sqrt(0.5))
    assert sigma_tau_from_r2(0.0) == (0.0, 1.0)
    assert sigma_tau_from_r2(1.0)[1] == 0.0
    assert tau_from_sigma(1.0) == pytest.approx(np.sqrt(0.5))
    with pytest.raises(DomainError):
        sigma_tau_from_r2(1.5)
    with pytest.raises(DomainError):
        tau_from_sigma(2.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"model": "bogus"},
        {"model": "missing_shock", "r2": -0.1},
        {"model": "separable", "r2": 0.2},
        {"model": "missing_interaction", "r2": 0.2, "interaction_dim": 0},
        {"model": "missing_shock", "r2": 0.2, "nu_dist": "normal"},
    ],
)
def test_noise_spec_validation(kwargs):
    with pytest.raises(DomainError):
        NoiseSpec(**kwargs)


def test_individual_types():
    x, y = individual_types(Margins([2, 1], [0, 3]))
    np.testing.assert_array_equal(x, [0, 0, 1])
    np.testing.assert_array_equal(y, [1, 1, 1])
    with pytest.raises(DomainError):
        individual_types(Margins([1.5], [1]))


def test_bundle_is_reproducible_and_streams_are_independent():
    space = TypeSpace(2, 2)
    a = draw_bundle(4, 3, space, NoiseSpec("missing_shock", 0.4), 9)
    b = draw_bundle(4, 3, space, NoiseSpec("missing_shock", 0.4), 9)
    c = draw_bundle(4, 3, space, NoiseSpec("separable"), 9)
    np.testing.assert_array_equal(a.nu, b.nu)
    np.testing.assert_array_equal(a.eps, c.eps)
    np.testing.assert_array_equal(a.eta, c.eta)
    assert c.nu is None and c.xi is None
    assert a.eps.shape == (4, 3) and a.eta.shape == (3, 3) and a.nu.shape == (4, 3)
    d = draw_bundle(4, 3, space, NoiseSpec("missing_interaction", 0.4, interaction_dim=3), 9)
    assert d.xi.shape == (4, 3) and d.zeta.shape == (3, 3)


def test_zero_r2_reproduces_separable_market_exactly():
    margins = Margins([3, 2], [2, 4])
    sep = build_finite_market(PHI, margins, NoiseSpec("separable"), 5)
    for model in ("missing_shock", "missing_interaction"):
        other = build_finite_market(PHI, margins, NoiseSpec(model, 0.0), 5)
        np.testing.assert_array_equal(sep.tilde_phi, other.tilde_phi)
        np.testing.assert_array_equal(sep.phi_i0, other.phi_i0)


def test_realized_market_structure():
    margins = Margins([2, 1], [1, 2])
    x, y = individual_types(margins)
    bundle = draw_bundle(3, 3, margins.space, NoiseSpec("missing_shock", 0.5), 3)
    market = realized_market(PHI, x, y, bundle, sigma=1.0)
    tau = np.sqrt(0.5)
    i, j = 2, 0
    expected = PHI[x[i], y[j]] + tau * (bundle.eps[i, 1 + y[j]] + bundle.eta[j, 1 + x[i]]) + bundle.nu[i, j]
    assert market.tilde_phi[i, j] == pytest.approx(expected)
    np.testing.assert_allclose(market.phi_i0, tau * bundle.eps[:, 0])
    unscaled = realized_market(PHI, x, y, bundle, sigma=1.0, scale_singles=False)
    np.testing.assert_array_equal(unscaled.phi_i0, bundle.eps[:, 0])
    sep_bundle = draw_bundle(3, 3, margins.space, NoiseSpec("separable"), 3)
    with pytest.raises(DomainError):
        realized_market(PHI, x, y, sep_bundle, sigma=0.5)
    with pytest.raises(DimensionError):
        realized_market(np.zeros((3, 3)), x, y, bundle, space=margins.space)


@pytest.mark.parametrize("model", ["missing_shock", "missing_interaction"])
@given(r2=st.sampled_from([0.0, 0.2, 0.4, 0.6, 0.8, 1.0]))
@settings(max_examples=6, deadline=None)
def test_idiosyncratic_variance_is_constant_in_r2(model, r2):
    # var(tau (eps + eta) + sigma * pair term) = 2 tau^2 pi^2/6 + sigma^2 pi^2/6 = pi^2/3
    margins = Margins([1], [1])
    values = np.array(
        [build_finite_market(np.zeros((1, 1)), margins, NoiseSpec(model, r2), s).tilde_phi[0, 0] for s in range(4000)]
    )
    _within(values, 0.0, 2 * GUMBEL_VARIANCE)


def test_build_finite_market_dimensions():
    with pytest.raises(DimensionError):
        build_finite_market(np.zeros((3, 2)), Margins([1, 1], [1, 1]), NoiseSpec(), 0)
    market = build_finite_market(PHI, Margins([3, 1], [2, 2]), NoiseSpec(), 0)
    assert market.tilde_phi.shape == (4, 4)
