"""Closed-form sanity checks that run without pytest (`mlrd selftest`)."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from mlrd_toolkit.common.errors import DomainError, MLRDError, OrderingError
from mlrd_toolkit.common.logging_utils import log_duration
from mlrd_toolkit.core import estimators, hermite, limits, matalg, model, normalize, simulate

logger = logging.getLogger("app.selftest")

Check = Callable[[], None]


@dataclass
class SelftestResult:
    name: str
    passed: bool
    message: str = ""


def _close(a, b, tol: float = 1e-12) -> None:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or not np.allclose(a, b, rtol=0.0, atol=tol):
        raise AssertionError(f"expected {b.tolist()}, got {a.tolist()}")


def _raises(exc: type, fn: Callable[[], object]) -> None:
    try:
        fn()
    except exc:
        return
    raise AssertionError(f"{exc.__name__} not raised")


def _gaussian() -> model.ProcessSpec:
    return model.ProcessSpec.gaussian_diagonal([0.3, 0.2], [0.5, 0.5])


def _linear() -> model.ProcessSpec:
    return model.ProcessSpec.linear([0.4, 0.2], np.eye(2), np.eye(2))


def _matalg() -> None:
    _close(matalg.diag_power([0.0, 0.0], 2.0), np.eye(2))
    _close(matalg.diag_power([1.0, 2.0], 2.0), np.diag([2.0, 4.0]))
    _close(matalg.diag_power([0.5], 4.0), [[2.0]])
    _close(matalg.sym_inv_sqrt(np.diag([4.0, 9.0])), np.diag([0.5, 1.0 / 3.0]))
    _close(matalg.upper_factor(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    _raises(DomainError, lambda: matalg.diag_power([1.0], 0.0))


def _coefficients() -> None:
    spec = model.ProcessSpec.linear([0.3, 0.1], np.eye(2), 2.0 * np.eye(2))
    _close(model.lrd_coefficient(spec, 1), np.eye(2))
    _close(model.lrd_coefficient(spec, -1), 2.0 * np.eye(2))


def _conditions() -> None:
    singular = model.ProcessSpec.linear([0.3, 0.1], [[1.0, 1.0], [1.0, 1.0]], np.eye(2))
    if model.check_conditions(singular).c1:
        raise AssertionError("C1 should fail for a singular A+")
    tied = model.ProcessSpec.linear([0.2, 0.2], np.eye(2), np.eye(2))
    if model.check_conditions(tied).ordering:
        raise AssertionError("ordering should fail for d=(0.2,0.2)")
    _raises(OrderingError, lambda: model.ensure_admissible(tied))


def _autocovariances() -> None:
    white = model.ProcessSpec.white_noise(2)
    _close(model.theoretical_gamma(white, 0, 1), np.eye(2))
    _close(model.theoretical_gamma(white, 3, 4), np.zeros((2, 2)))
    _close(model.theoretical_gamma(_gaussian(), 0, 1), np.eye(2))


def _simulation() -> None:
    spec = _linear()
    a = simulate.simulate(spec, 64, seed=7, M=64)
    b = simulate.simulate(spec, 64, seed=7, M=64)
    c = simulate.simulate(spec, 64, seed=8, M=64)
    if not np.array_equal(a.values, b.values):
        raise AssertionError("same seed produced different paths")
    if np.array_equal(a.values, c.values):
        raise AssertionError("different seeds produced identical paths")
    rad = simulate.gen_innovations(model.InnovationFamily.RADEMACHER, 256, 2, seed=1)
    if not set(np.unique(rad)) <= {-1.0, 1.0}:
        raise AssertionError("rademacher innovations outside {-1, +1}")


def _partial_sums() -> None:
    values = np.tile([1.0, -2.0], (8, 1))
    sums = simulate.partial_sums(values, [0.0, 0.5, 1.0])
    _close(sums, [[0.0, 0.0], [4.0, -8.0], [8.0, -16.0]])


def _normalizers() -> None:
    white = model.ProcessSpec.white_noise(2)
    _close(normalize.exact_sigma_sq(white, 16, 16), 16.0 * np.eye(2))
    _close(normalize.exact_normalizer(16.0 * np.eye(2)), 0.25 * np.eye(2))
    mem = model.MemoryParameters((0.3,))
    _close(normalize.operator_normalizer(mem, 16), [[16.0 ** (0.3 - 0.5)]])
    X = normalize.x_matrix(model.r_matrix(_linear()), _linear().memory, 1)
    _close(X, X.T)


def _hermite() -> None:
    _close(hermite.hermite_poly(0, 5.0), 1.0)
    _close(hermite.hermite_poly(2, 2.0), 3.0)
    _close(hermite.hermite_poly(3, 2.0), 2.0)
    _close(hermite.hermite_coefficients(lambda x: x, 4), [0.0, 1.0, 0.0, 0.0, 0.0], tol=1e-12)
    _close(hermite.hermite_coefficients(lambda x: x ** 3, 4), [0.0, 3.0, 0.0, 1.0, 0.0], tol=1e-10)
    if hermite.hermite_rank(hermite.hermite_coefficients(lambda x: x * x - 1.0, 4)) != 2:
        raise AssertionError("rank of x^2-1 should be 2")
    _close(hermite.multivariate_hermite((0, 0), [0.3, -1.2], np.eye(2)), 1.0)
    _close(hermite.multivariate_hermite((2, 0), [0.3, -1.2], np.eye(2)), 0.3 ** 2 - 1.0)
    _close(hermite.hermite_addition_check(1, [0.6, 0.8], [1.5, -0.5]), 0.0)
    _close(hermite.hermite_addition_check(3, [1.0, 0.0], [1.5, -0.5]), 0.0, tol=1e-12)


def _limits() -> None:
    cov = limits.ofbm_covariance(_linear())
    _close(limits.ofbm_cross_cov(cov, 0.0, 0.0), np.zeros((2, 2)))
    _close(limits.self_similarity_residual(cov, 1.0, 0.5, 0.7), 0.0)
    _close(abs(limits.limit_kernel_f(2, 0.2, 0.0, [0.5, 1.0])), 0.0)
    if not limits.beta_constant(2, 0.2) > 0:
        raise AssertionError("beta constant must be positive")


def _estimators() -> None:
    path = simulate.SamplePath(np.zeros((8, 2)), seed=0, spec_digest="", generator="const",
                               kind=model.ProcessKind.WHITE_NOISE)
    _close(estimators.sample_autocov(path, 1).matrix, np.zeros((2, 2)))
    _close(estimators.isserlis_fourth(np.eye(2), 0, 0, 0, 0), 3.0)
    _close(estimators.isserlis_fourth([[1.0, 0.4], [0.4, 2.0]], 0, 0, 1, 1), 2.0 + 2 * 0.16)
    mem = model.MemoryParameters((0.2, 0.1))
    _close(estimators.normalize_deviation(np.zeros((2, 2)), 64, estimators.Regime.OPERATOR, mem), np.zeros((2, 2)))


CHECKS: List[Tuple[str, Check]] = [
    ("matalg", _matalg),
    ("coefficients", _coefficients),
    ("conditions", _conditions),
    ("autocovariances", _autocovariances),
    ("simulation", _simulation),
    ("partial_sums", _partial_sums),
    ("normalizers", _normalizers),
    ("hermite", _hermite),
    ("limits", _limits),
    ("estimators", _estimators),
]


def run_selftest(only: Optional[List[str]] = None) -> List[SelftestResult]:
    results: List[SelftestResult] = []
    for name, check in CHECKS:
        if only and name not in only:
            continue
        with log_duration(logger, "selftest", name=name) as fields:
            try:
                check()
                results.append(SelftestResult(name, True))
            except (AssertionError, MLRDError) as e:
                results.append(SelftestResult(name, False, str(e)))
            fields["passed"] = results[-1].passed
    return results
