"""Matrix-valued normalizations of partial sums.

* exact: Σ_n^{-1}, the symmetric inverse square root of Var(S_n);
* asymptotic: A(n)^{-1} built from the X matrix of the rank-τ partial sums;
* operator: B^{-1}(n) for sample autocovariances with memory below 1/4.

The row/column index convention for d_{max{l,m}} is the INDEX maximum. Under the
enforced ordering d_1 > ... > d_d the larger index carries the smaller memory parameter.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.special import factorial

from mlrd_toolkit.common.errors import ConfigurationError, ContractError, DomainError, EvaluationError
from mlrd_toolkit.core.matalg import as_square, sym_inv_sqrt, upper_factor
from mlrd_toolkit.core.model import (
    MemoryParameters,
    ProcessKind,
    ProcessSpec,
    RMatrix,
    coefficient_block,
    gamma_sequence,
    gaussian_component_autocov,
    r_matrix,
)

logger = logging.getLogger("core.normalize")

ROUTE_RTOL = 1e-8


@dataclass
class ExactNormalization:
    n: int
    sigma_sq: np.ndarray
    inv_sqrt: np.ndarray
    column_variances: Optional[np.ndarray] = None
    sup_ratio: Optional[np.ndarray] = None
    route_gap: Optional[float] = None


@dataclass
class AsymptoticNormalization:
    """Limiting-form normalization for Hermite rank τ.

    `a_factor` holds the upper-triangular a_lm that enter A^{-1}(n) together with the sign
    pattern (-1)^{l+m}. The kept invariant is on the signed factor:
    signed_factor · x_matrix · signed_factorᵀ = I, equivalently signed_factorᵀ · signed_factor = X^{-1}.
    a_factor · a_factorᵀ · x_matrix = I holds only when d = 1 or X is diagonal.
    """

    tau: int
    x_matrix: np.ndarray
    a_factor: np.ndarray
    memory: MemoryParameters
    meta: Dict[str, float] = field(default_factory=dict)

    @property
    def signed_factor(self) -> np.ndarray:
        """((-1)^{l+m} a_lm): the factor with signed_factor · X · signed_factorᵀ = I."""
        return sign_pattern(self.a_factor.shape[0]) * self.a_factor


def sign_pattern(d: int) -> np.ndarray:
    idx = np.arange(d)
    return np.where((idx[:, None] + idx[None, :]) % 2 == 0, 1.0, -1.0)


def _require_truncation(n: int, M: int) -> None:
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if M < n:
        raise ConfigurationError(f"truncation M={M} must be >= n={n}")


# --- exact Σ_n² ------------------------------------------------------------


def window_weights(spec: ProcessSpec, n: int, M: int) -> np.ndarray:
    """W(j) = Σ_{k=1..n} A_{j-k} over |j-k| <= M, for j = 1-M .. n+M (axis 0)."""
    block = coefficient_block(spec, M)
    d = spec.dimension
    cums = np.concatenate([np.zeros((1, d, d)), np.cumsum(block, axis=0)], axis=0)
    j = np.arange(1 - M, n + M + 1)
    hi = np.minimum(j - 1, M) + M + 1
    lo = np.maximum(j - n, -M) + M
    return cums[hi] - cums[lo]


def sigma_sq_from_coefficients(spec: ProcessSpec, n: int, M: int) -> np.ndarray:
    if spec.kind == ProcessKind.WHITE_NOISE:
        return float(n) * np.eye(spec.dimension)
    if spec.kind != ProcessKind.LINEAR_LRD:
        raise ContractError(f"coefficient route needs a linear spec, got {spec.kind.value}")
    w = window_weights(spec, n, M)
    out = np.einsum("jlq,jmq->lm", w, w)
    return 0.5 * (out + out.T)


def sigma_sq_from_gamma(spec: ProcessSpec, n: int, M: int) -> np.ndarray:
    """n·γ(0) + Σ_{k=1}^{n-1} (n-k)(γ(k) + γ(k)ᵀ)."""
    gam = gamma_sequence(spec, n - 1, M)
    weights = (n - np.arange(n)).astype(float)
    lagged = np.einsum("k,kij->ij", weights[1:], gam[1:]) if n > 1 else np.zeros_like(gam[0])
    out = n * gam[0] + lagged + lagged.T
    return 0.5 * (out + out.T)


def exact_sigma_sq(spec: ProcessSpec, n: int, M: int) -> np.ndarray:
    """Var(S_n) with the truncation M shared with the simulator."""
    _require_truncation(n, M)
    if spec.kind == ProcessKind.GAUSSIAN_DIAGONAL:
        return sigma_sq_from_gamma(spec, n, M)
    return sigma_sq_from_coefficients(spec, n, M)


def omega_diagnostics(spec: ProcessSpec, n: int, M: int) -> tuple[np.ndarray, np.ndarray]:
    """(ω^n_pq)² = Σ_j W_pq(j)² and the vanishing ratio sup_j |W_pq(j)| / ω^n_pq."""
    _require_truncation(n, M)
    if spec.kind == ProcessKind.WHITE_NOISE:
        d = spec.dimension
        omega_sq = float(n) * np.eye(d)
        ratio = np.where(np.eye(d) > 0, 1.0 / math.sqrt(n), 0.0)
        return omega_sq, ratio
    w = window_weights(spec, n, M)
    omega_sq = np.sum(w * w, axis=0)
    sup = np.max(np.abs(w), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(omega_sq > 0, sup / np.sqrt(omega_sq), 0.0)
    return omega_sq, ratio


def exact_normalizer(sigma_sq: np.ndarray) -> np.ndarray:
    """Σ_n^{-1} = symmetric inverse square root of Σ_n²."""
    return sym_inv_sqrt(sigma_sq)


def exact_normalization(spec: ProcessSpec, n: int, M: int, cross_check: bool = True) -> ExactNormalization:
    start = time.perf_counter()
    sigma_sq = exact_sigma_sq(spec, n, M)
    gap = None
    if cross_check and spec.kind == ProcessKind.LINEAR_LRD:
        other = sigma_sq_from_gamma(spec, n, M)
        gap = float(np.max(np.abs(other - sigma_sq)) / max(np.max(np.abs(sigma_sq)), 1e-300))
        if gap > ROUTE_RTOL:
            raise EvaluationError(
                f"Σ_n² assembly routes disagree: relative gap {gap:.3e} at n={n}, M={M}",
                details={"gap": gap, "n": n, "M": M},
            )
    omega_sq = sup_ratio = None
    if spec.kind != ProcessKind.GAUSSIAN_DIAGONAL:
        omega_sq, sup_ratio = omega_diagnostics(spec, n, M)
    inv = exact_normalizer(sigma_sq)
    elapsed_ms = (time.perf_counter() - start) * 1000
    logger.info("normalizer_built kind=exact n=%d M=%d duration_ms=%.2f", n, M, elapsed_ms)
    return ExactNormalization(n, sigma_sq, inv, omega_sq, sup_ratio, gap)


# --- Lemma-type asymptotic normalization -----------------------------------


def x_matrix(R: RMatrix | np.ndarray, memory: MemoryParameters, tau: int) -> np.ndarray:
    """x_ij = τ!/((2-τ(d_i+d_j))(1-τ(d_i+d_j))) · (R_ij^τ + R_ji^τ)."""
    entries = R.entries if isinstance(R, RMatrix) else as_square(R, "R")
    tau = int(tau)
    if tau < 1:
        raise DomainError(f"Hermite rank must be >= 1, got tau={tau}")
    dsum = memory.array[:, None] + memory.array[None, :]
    bad = np.argwhere(tau * dsum >= 1.0)
    if bad.size:
        i, j = (int(x) + 1 for x in bad[0])
        raise DomainError(
            f"tau*(d_i+d_j) >= 1 at (i,j)=({i},{j}) with tau={tau}", details={"i": i, "j": j, "tau": tau}
        )
    powered = np.power(entries, tau)
    scale = float(factorial(tau, exact=True)) / ((2.0 - tau * dsum) * (1.0 - tau * dsum))
    return scale * (powered + powered.T)


def asymptotic_normalization(R: RMatrix | np.ndarray, memory: MemoryParameters, tau: int) -> AsymptoticNormalization:
    return normalization_from_x(x_matrix(R, memory, tau), memory, tau)


def normalization_from_x(X: np.ndarray, memory: MemoryParameters, tau: int) -> AsymptoticNormalization:
    """a_lm from the positive-diagonal upper factor of X; any symmetric PD X of the right shape."""
    X = as_square(X, "X")
    effective = np.linalg.inv(upper_factor(X))
    effective = np.triu(effective)
    a_lm = sign_pattern(memory.d) * effective
    return AsymptoticNormalization(tau=int(tau), x_matrix=X, a_factor=a_lm, memory=memory)


def rate_diagonal(memory: MemoryParameters, tau: int, n: int) -> np.ndarray:
    return np.power(float(n), tau * memory.array - 1.0)


def asymptotic_normalizer(norm: AsymptoticNormalization, n: int) -> np.ndarray:
    """A^{-1}(n) with entries (-1)^{l+m} n^{τ d_{max{l,m}} - 1} a_lm."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    d = norm.memory.d
    idx = np.arange(d)
    col_max = np.maximum(idx[:, None], idx[None, :])
    rates = rate_diagonal(norm.memory, norm.tau, n)[col_max]
    return sign_pattern(d) * rates * norm.a_factor


def calibrated_normalizer(memory: MemoryParameters, tau: int, n: int, covariance: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Finite-n member of the same equivalence class: upper_factor(X_n)^{-1} · diag(n^{τd-1}).

    X_n = Dn · covariance · Dn is the rescaled exact covariance of the rank-τ partial sums,
    so Var(A_n · sum) = I at this n. Returns (A_n, X_n).
    """
    dn = rate_diagonal(memory, tau, n)
    xn = dn[:, None] * as_square(covariance, "covariance") * dn[None, :]
    xn = 0.5 * (xn + xn.T)
    factor = np.triu(np.linalg.inv(upper_factor(xn)))
    return factor * dn[None, :], xn


def hermite_sum_covariance(spec: ProcessSpec, n: int, tau: int) -> np.ndarray:
    """Var(Σ_{k<=n} H_τ(X_k)) for gaussian_diagonal specs: diag(τ! Σ_{|k|<n} (n-|k|) r_i(k)^τ)."""
    if spec.kind != ProcessKind.GAUSSIAN_DIAGONAL:
        raise ContractError(f"hermite_sum_covariance needs gaussian_diagonal, got {spec.kind.value}")
    weights = (n - np.arange(n)).astype(float)
    out = np.zeros(spec.dimension)
    for i in range(spec.dimension):
        r = np.power(gaussian_component_autocov(spec, i, n), tau)
        out[i] = n * r[0] + 2.0 * float(np.dot(weights[1:], r[1:]))
    return float(math.factorial(tau)) * np.diag(out)


def asymptotic_form_covariance(spec: ProcessSpec, n: int, tau: int) -> np.ndarray:
    """Leading term n^{2-τ(d_i+d_j)} x_ij of Var(Σ H_τ) (τ = 1: Var(S_n))."""
    mem = spec.require_memory()
    X = x_matrix(r_matrix(spec), mem, tau)
    rates = np.power(float(n), 1.0 - tau * mem.array)
    return rates[:, None] * X * rates[None, :]


# --- operator normalization --------------------------------------------------


def operator_normalizer(memory: MemoryParameters, n: int) -> np.ndarray:
    """B^{-1}(n) with entries n^{d_{max{l,m}} - 1/2}."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    idx = np.arange(memory.d)
    col_max = np.maximum(idx[:, None], idx[None, :])
    return np.power(float(n), memory.array[col_max] - 0.5)
