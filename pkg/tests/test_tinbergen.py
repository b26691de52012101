import numpy as np
import pytest
from scipy.stats import spearmanr

from tumatch.exceptions import DimensionError, DomainError, RankError, SizeError
from tumatch.tinbergen import QuadraticSpec, estimate_affine_map, simulate_quadratic_market


def test_exact_linear_data():
    x = np.random.default_rng(0).normal(size=(50, 1))
    assert estimate_affine_map((x, 2 * x), 1).T_hat[0, 0] == pytest.approx(2.0)


def test_regression_errors():
    with pytest.raises(RankError):
        estimate_affine_map((np.ones((1, 1)), np.ones((1, 1))), 1)
    x = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(RankError):
        estimate_affine_map((x, x), 2)


def test_spec_validation():
    with pytest.raises(DimensionError):
        QuadraticSpec(np.eye(2), np.eye(3), np.eye(2), 10, 1)
    with pytest.raises(DomainError):
        QuadraticSpec(np.eye(2), -np.eye(2), np.eye(2), 10, 1)
    with pytest.raises(DomainError):
        QuadraticSpec(np.eye(2), np.eye(2), np.eye(2), 10, 3)
    with pytest.raises(SizeError):
        simulate_quadratic_market(QuadraticSpec(np.eye(1), np.eye(1), np.eye(1), 3000, 1), 0)


def test_scalar_market_is_positively_assortative():
    spec = QuadraticSpec([[1.0]], [[1.0]], [[1.0]], 300, 1)
    x, y = simulate_quadratic_market(spec, 3)
    assert spearmanr(x[:, 0], y[:, 0]).statistic == pytest.approx(1.0)


def test_scalar_slope_approaches_one():
    errors = []
    for N in (100, 800):
        spec = QuadraticSpec([[1.0]], [[1.0]], [[1.0]], N, 1)
        slopes = [estimate_affine_map(simulate_quadratic_market(spec, s), 1).T_hat[0, 0] for s in range(5)]
        errors.append(abs(np.mean(slopes) - 1.0))
    assert errors[1] < 0.05
    assert errors[1] < errors[0] + 0.02


def test_reproducible():
    spec = QuadraticSpec(np.diag([1.0, 0.8]), np.eye(2), np.eye(2), 50, 1)
    a, b = simulate_quadratic_market(spec, 11), simulate_quadratic_market(spec, 11)
    np.testing.assert_array_equal(a[1], b[1])


def test_block_structure_and_residuals():
    spec = QuadraticSpec(np.diag([1.0, 0.8]), np.eye(2), np.eye(2), 600, 1)
    pairs = simulate_quadratic_market(spec, 5)
    full = estimate_affine_map(pairs, 2)
    assert abs(full.T_hat[0, 1]) < 0.1 and abs(full.T_hat[1, 0]) < 0.1
    assert np.all(np.abs(full.residual_mean) < 0.1)
    observed = estimate_affine_map(pairs, 1)
    assert observed.T_hat.shape == (1, 1)
    assert abs(observed.T_hat[0, 0] - full.T_hat[0, 0]) < 0.05


def test_cross_block_entries_shrink_with_n():
    def worst(N):
        spec = QuadraticSpec(np.diag([1.0, 0.8]), np.eye(2), np.eye(2), N, 1)
        return np.mean(
            [np.abs(estimate_affine_map(simulate_quadratic_market(spec, s), 2).T_hat[[0, 1], [1, 0]]).max()
             for s in range(4)]
        )

    assert worst(800) < worst(100)
