import math

import numpy as np
import pytest

from mlrd_toolkit.common.errors import ContractError, DomainError, SingularityError
from mlrd_toolkit.core.hermite import expand_subordination
from mlrd_toolkit.core.limits import (
    beta_constant,
    limit_kernel_f,
    limit_law,
    ofbm_covariance,
    ofbm_cross_cov,
    self_similarity_residual,
    stationary_increment_residual,
)
from mlrd_toolkit.core.model import ProcessSpec, r_matrix
from mlrd_toolkit.core.normalize import x_matrix

SKEWED = ProcessSpec.linear([0.4, 0.25], [[1.0, 0.5], [0.0, 1.0]], [[1.0, 0.0], [0.3, 1.0]])


@pytest.fixture(params=["diagonal", "skewed"])
def cov(request, linear_spec):
    return ofbm_covariance(linear_spec if request.param == "diagonal" else SKEWED)


def test_vanishes_at_origin(cov):
    np.testing.assert_allclose(ofbm_cross_cov(cov, 0.0, 0.0), np.zeros((2, 2)))
    np.testing.assert_allclose(ofbm_cross_cov(cov, 0.0, 0.7), np.zeros((2, 2)), atol=1e-12)


def test_unit_time_is_identity(cov):
    np.testing.assert_allclose(ofbm_cross_cov(cov, 1.0, 1.0), np.eye(2), atol=1e-10)


def test_equal_times_formula():
    cov = ofbm_covariance(SKEWED)
    X = x_matrix(r_matrix(SKEWED), SKEWED.memory, 1)
    tH = np.diag(0.5 ** cov.hurst)
    expected = cov.a_factor @ tH @ X @ tH @ cov.a_factor.T
    np.testing.assert_allclose(ofbm_cross_cov(cov, 0.5, 0.5), expected, rtol=1e-12, atol=1e-12)


def test_cross_cov_transpose_symmetry(cov):
    np.testing.assert_allclose(ofbm_cross_cov(cov, 0.3, 0.8), ofbm_cross_cov(cov, 0.8, 0.3).T, atol=1e-12)


@pytest.mark.parametrize("a,t,u", [(0.5, 0.6, 0.9), (0.25, 1.0, 0.4), (2.0, 0.1, 0.5)])
def test_self_similarity(cov, a, t, u):
    assert self_similarity_residual(cov, a, t, u) < 1e-10


def test_self_similarity_unit_scale_is_trivial(cov):
    assert self_similarity_residual(cov, 1.0, 0.3, 0.6) < 1e-12


def test_stationary_increments(cov):
    for t, u in [(0.2, 0.9), (0.75, 0.25), (0.5, 0.5)]:
        assert stationary_increment_residual(cov, t, u) < 1e-10


def test_domain_errors(cov):
    with pytest.raises(DomainError):
        ofbm_cross_cov(cov, 1.2, 0.5)
    with pytest.raises(DomainError):
        self_similarity_residual(cov, 2.0, 0.6, 0.2)
    with pytest.raises(DomainError):
        self_similarity_residual(cov, 0.0, 0.6, 0.2)
    with pytest.raises(ContractError):
        ofbm_covariance(ProcessSpec.white_noise(2))


def test_kernel_branches():
    assert limit_kernel_f(2, 0.2, 0.0, [0.5, 1.0]) == 0
    at_zero = limit_kernel_f(2, 0.2, 0.7, [0.5, -0.5])
    assert abs(at_zero - 0.7 * 0.5 ** -0.6) < 1e-12
    x = np.array([0.5, 1.0])
    s = x.sum()
    expected = (np.exp(1j * 0.7 * s) - 1) / (1j * s) * np.prod(np.abs(x) ** (0.2 - 0.5))
    assert abs(limit_kernel_f(2, 0.2, 0.7, x) - expected) < 1e-12


def test_kernel_errors():
    with pytest.raises(SingularityError):
        limit_kernel_f(2, 0.2, 0.5, [0.0, 1.0])
    with pytest.raises(DomainError):
        limit_kernel_f(2, 0.3, 0.5, [0.5, 1.0])


def test_beta_constant():
    assert beta_constant(1, 0.3) > 0
    assert beta_constant(2, 0.2) > 0
    for tau, d in [(2, 0.25), (1, 0.0), (0, 0.1)]:
        with pytest.raises(DomainError):
            beta_constant(tau, d)


def test_beta_constant_value_at_quarter():
    # Γ(1/2) = √π, so 2Γ(1/2)sin(π/4) = √(2π)
    expected = math.sqrt(0.75 * 0.5 / (2.0 * math.gamma(0.5) * math.sin(math.pi / 4)))
    assert beta_constant(1, 0.25) == pytest.approx(expected, rel=1e-12)
    assert beta_constant(1, 0.25) == pytest.approx(math.sqrt(0.375 / math.sqrt(2.0 * math.pi)), rel=1e-12)
    assert beta_constant(1, 0.25) == pytest.approx(0.386786, rel=1e-5)


def test_beta_constant_decreases_in_rank():
    values = [beta_constant(tau, 0.1) for tau in (1, 2, 3)]
    assert values[0] > values[1] > values[2] > 0


def test_limit_law_scale():
    spec = ProcessSpec.gaussian_diagonal([0.2, 0.1], [0.5, 0.4])
    coeffs = expand_subordination([np.square, np.square], l_max=4)
    law = limit_law(spec, coeffs)
    assert law.tau == 2
    expected = np.array([0.5 * beta_constant(2, 0.2), 0.4 * beta_constant(2, 0.1)])
    np.testing.assert_allclose(law.scale, expected, rtol=1e-10)
    with pytest.raises(ContractError):
        limit_law(SKEWED, coeffs)
