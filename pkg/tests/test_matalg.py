import numpy as np
import pytest

from mlrd_toolkit.common.errors import DomainError, FactorizationError
from mlrd_toolkit.core.matalg import diag_power, sym_inv_sqrt, upper_factor


def test_diag_power_examples():
    np.testing.assert_allclose(diag_power([0.0, 0.0], 2.0), np.eye(2))
    np.testing.assert_allclose(diag_power([1.0, 2.0], 2.0), np.diag([2.0, 4.0]))
    np.testing.assert_allclose(diag_power([0.5], 4.0), [[2.0]])


def test_diag_power_is_multiplicative():
    g = [0.3, 0.75, 1.2]
    for a, b in [(0.5, 3.0), (2.0, 7.5), (0.1, 0.2)]:
        np.testing.assert_allclose(diag_power(g, a) @ diag_power(g, b), diag_power(g, a * b), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("a", [0.0, -1.0])
def test_diag_power_rejects_non_positive_base(a):
    with pytest.raises(DomainError):
        diag_power([0.5], a)


def test_sym_inv_sqrt_examples():
    np.testing.assert_allclose(sym_inv_sqrt(np.eye(3)), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(sym_inv_sqrt(np.diag([4.0, 9.0])), np.diag([0.5, 1.0 / 3.0]), atol=1e-14)


def test_sym_inv_sqrt_identity_on_random_spd(rng, random_spd):
    for _ in range(50):
        d = int(rng.integers(1, 6))
        S = random_spd(d)
        M = sym_inv_sqrt(S)
        assert np.max(np.abs(M @ S @ M - np.eye(d))) < 1e-10
        assert np.max(np.abs(M - M.T)) < 1e-12
        assert np.max(np.abs(M @ S - S @ M)) < 1e-9


def test_sym_inv_sqrt_errors():
    with pytest.raises(FactorizationError):
        sym_inv_sqrt([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(FactorizationError) as exc:
        sym_inv_sqrt([[1.0, 2.0], [2.0, 1.0]])
    assert "eigenvalue" in str(exc.value)


def test_upper_factor_examples():
    np.testing.assert_allclose(upper_factor(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(upper_factor(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    S = np.array([[2.0, 1.0], [1.0, 1.0]])
    A = upper_factor(S)
    np.testing.assert_allclose(A @ A.T, S, atol=1e-12)
    assert A[1, 0] == 0.0
    assert np.all(np.diag(A) > 0)


def test_upper_factor_reconstructs_random_spd(rng, random_spd):
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        S = random_spd(d)
        A = upper_factor(S)
        assert np.max(np.abs(A @ A.T - S)) < 1e-10
        assert np.allclose(np.tril(A, -1), 0.0)
        assert np.all(np.diag(A) > 0)


def test_upper_factor_rejects_indefinite():
    with pytest.raises(FactorizationError):
        upper_factor([[1.0, 0.0], [0.0, -1.0]])
