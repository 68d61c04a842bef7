import numpy as np
import pytest

from mlrd_toolkit.common.errors import ContractError, DomainError
from mlrd_toolkit.core.estimators import (
    Regime,
    autocov_cov_bound_check,
    autocov_covariance,
    autocov_panel,
    check_regime,
    isserlis_fourth,
    lemma_bound,
    normalize_deviation,
    normalized_autocov_deviation,
    regime_for,
    sample_autocov,
)
from mlrd_toolkit.core.model import MemoryParameters, ProcessKind, ProcessSpec, r_matrix
from mlrd_toolkit.core.simulate import SamplePath, simulate, simulate_panel

OPERATOR_SPEC = ProcessSpec.gaussian_diagonal([0.2, 0.1], [0.5, 0.5])


def _path(values):
    return SamplePath(np.asarray(values, dtype=float), seed=0, spec_digest="", generator="const",
                      kind=ProcessKind.WHITE_NOISE)


def test_zero_path_has_zero_autocov():
    est = sample_autocov(_path(np.zeros((8, 2))), 1)
    assert est.n == 7
    np.testing.assert_array_equal(est.matrix, np.zeros((2, 2)))


def test_single_observation_is_outer_product():
    est = sample_autocov(_path([[2.0, -1.0]]), 0)
    np.testing.assert_allclose(est.matrix, [[4.0, -2.0], [-2.0, 1.0]])


def test_lagged_example():
    values = np.array([[1.0, 0.0], [2.0, 1.0], [0.0, 3.0]])
    est = sample_autocov(_path(values), 1)
    # (X_1 X_2ᵀ + X_2 X_3ᵀ) / 2
    expected = (np.outer(values[0], values[1]) + np.outer(values[1], values[2])) / 2.0
    np.testing.assert_allclose(est.matrix, expected)
    panel = autocov_panel(_path(values), 1)
    assert panel.shape == (2, 2, 2)
    np.testing.assert_allclose(panel[1], expected)
    np.testing.assert_allclose(panel[0], (np.outer(values[0], values[0]) + np.outer(values[1], values[1])) / 2.0)


def test_sample_autocov_validation():
    path = _path(np.ones((10, 2)))
    with pytest.raises(DomainError):
        sample_autocov(path, -1)
    with pytest.raises(DomainError):
        sample_autocov(path, 3, n=8)


def test_centering_subtracts_gamma():
    white = ProcessSpec.white_noise(2)
    path = simulate(white, 64, seed=1)
    raw = sample_autocov(path, 0)
    centred = sample_autocov(path, 0, spec=white)
    assert centred.centered
    np.testing.assert_allclose(centred.matrix, raw.matrix - np.eye(2))


def test_isserlis_examples():
    assert isserlis_fourth(np.eye(2), 0, 0, 0, 0) == 3.0
    s = [[1.0, 0.4], [0.4, 2.0]]
    assert abs(isserlis_fourth(s, 0, 0, 1, 1) - 2.32) < 1e-12
    assert abs(isserlis_fourth(s, 0, 1, 0, 1) - 2.32) < 1e-12
    assert abs(isserlis_fourth(s, 0, 0, 0, 1) - 1.2) < 1e-12
    assert isserlis_fourth(np.eye(2), 0, 1, 0, 0) == 0.0


def test_isserlis_against_monte_carlo(rng):
    s = np.array([[1.0, 0.4], [0.4, 2.0]])
    z = rng.multivariate_normal(np.zeros(2), s, size=200_000)
    for idx in [(0, 0, 1, 1), (0, 0, 0, 1), (1, 1, 1, 1)]:
        prod = np.prod(z[:, list(idx)], axis=1)
        se = prod.std() / np.sqrt(prod.size)
        assert abs(prod.mean() - isserlis_fourth(s, *idx)) < 4.5 * se


def test_isserlis_rejects_bad_sigma():
    with pytest.raises(DomainError):
        isserlis_fourth([[1.0, 0.5], [0.0, 1.0]], 0, 0, 0, 0)
    with pytest.raises(DomainError):
        isserlis_fourth([[1.0, 2.0], [2.0, 1.0]], 0, 0, 0, 0)


def test_regimes(linear_spec):
    with pytest.raises(DomainError):
        check_regime(linear_spec, Regime.SQRT_N)
    with pytest.raises(DomainError):
        regime_for(linear_spec)
    with pytest.raises(DomainError):
        check_regime(ProcessSpec.white_noise(2), Regime.OPERATOR)
    assert regime_for(ProcessSpec.white_noise(2)) == Regime.SQRT_N
    assert regime_for(OPERATOR_SPEC) == Regime.OPERATOR
    assert regime_for(ProcessSpec.gaussian_diagonal([0.4, 0.3], [0.5, 0.5])) == Regime.SQRT_N


def test_normalize_deviation():
    mem = MemoryParameters((0.2, 0.1))
    zero = normalize_deviation(np.zeros((2, 2)), 64, Regime.OPERATOR, mem)
    np.testing.assert_array_equal(zero, np.zeros((2, 2)))
    np.testing.assert_allclose(normalize_deviation(np.eye(2), 100, Regime.SQRT_N, None), 10.0 * np.eye(2))
    with pytest.raises(ContractError):
        normalize_deviation(np.eye(2), 100, Regime.OPERATOR, None)


def test_normalized_deviation_checks_regime(linear_spec):
    path = simulate(linear_spec, 32, seed=2, M=64)
    with pytest.raises(DomainError):
        normalized_autocov_deviation(path, linear_spec, 0, Regime.OPERATOR)


def test_white_noise_exact_covariance():
    white = ProcessSpec.white_noise(2)
    n = 50
    lag0 = n * autocov_covariance(white, n, 0, 0)
    assert abs(lag0[0, 0, 0, 0] - 2.0) < 1e-12
    assert abs(lag0[0, 1, 0, 1] - 1.0) < 1e-12
    assert abs(lag0[0, 1, 1, 0] - 1.0) < 1e-12
    lag1 = n * autocov_covariance(white, n, 1, 1)
    assert abs(lag1[0, 0, 0, 0] - 1.0) < 1e-12
    cross = n * autocov_covariance(white, n, 0, 1)
    np.testing.assert_allclose(cross, np.zeros((2, 2, 2, 2)), atol=1e-12)


def test_white_noise_monte_carlo_variance():
    white = ProcessSpec.white_noise(1)
    n, reps = 200, 2000
    panel = simulate_panel(white, n, seed=5, streams=range(reps))
    gamma0 = np.mean(panel[:, :, 0] ** 2, axis=1)
    assert abs(n * gamma0.var(ddof=1) - 2.0) < 0.3


def test_lemma_bound_is_symmetric_and_non_negative():
    bound = lemma_bound(r_matrix(OPERATOR_SPEC), np.eye(2))
    np.testing.assert_allclose(bound, bound.T)
    assert np.all(bound >= 0)


def test_cov_bound_check():
    zero = autocov_cov_bound_check(OPERATOR_SPEC, 0, 0, np.zeros((2, 2)))
    assert zero.ok and zero.constant == 0.0
    report = autocov_cov_bound_check(OPERATOR_SPEC, 0, 1, np.eye(2))
    assert len(report.covariances) == 3
    assert report.ok
    assert report.to_dict()["n_values"] == [256, 512, 1024]
    with pytest.raises(ContractError):
        autocov_cov_bound_check(ProcessSpec.linear([0.2, 0.1], np.eye(2), np.eye(2)), 0, 0, np.eye(2))
