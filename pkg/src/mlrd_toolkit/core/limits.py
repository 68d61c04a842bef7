"""Limit-law descriptors: operator fractional Brownian motion covariance and Hermite-limit constants."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from mlrd_toolkit.common.errors import ContractError, DomainError, FactorizationError, SingularityError
from mlrd_toolkit.core.hermite import HermiteCoefficients
from mlrd_toolkit.core.matalg import as_square, diag_power
from mlrd_toolkit.core.model import MemoryParameters, ProcessKind, ProcessSpec, r_matrix
from mlrd_toolkit.core.normalize import asymptotic_normalization


@dataclass
class OfbmCovariance:
    memory: MemoryParameters
    r_tilde_pos: np.ndarray
    r_tilde_neg: np.ndarray
    a_factor: np.ndarray

    @property
    def hurst(self) -> np.ndarray:
        return self.memory.hurst


@dataclass
class LimitLaw:
    tau: int
    memory: MemoryParameters
    beta: np.ndarray
    hermite_lead: np.ndarray
    r_diag: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        """h_{τ,i} R_ii^{τ/2} β_{τ,d_i}: per-coordinate factor of the Hermite-process limit."""
        return self.hermite_lead * np.power(self.r_diag, self.tau / 2.0) * self.beta


def r_tilde(R: np.ndarray, memory: MemoryParameters) -> np.ndarray:
    """R_ij / ((1 - d_i - d_j)(2 - d_i - d_j)), the t > 0 branch."""
    dsum = memory.array[:, None] + memory.array[None, :]
    return as_square(R, "R") / ((1.0 - dsum) * (2.0 - dsum))


def ofbm_covariance(spec: ProcessSpec) -> OfbmCovariance:
    """Limit of A(n)^{-1} S_{floor(nt)}: A from the rank-one X matrix of r_matrix(spec)."""
    if spec.kind == ProcessKind.WHITE_NOISE:
        raise ContractError("white_noise has no OFBM limit with non-trivial memory")
    memory = spec.require_memory()
    R = r_matrix(spec)
    pos = r_tilde(R, memory)
    norm = asymptotic_normalization(R, memory, 1)
    return OfbmCovariance(memory=memory, r_tilde_pos=pos, r_tilde_neg=pos.T.copy(), a_factor=norm.signed_factor)


def _hpow(memory: MemoryParameters, s: float) -> np.ndarray:
    # 0^{positive} = 0
    if s == 0.0:
        return np.zeros((memory.d, memory.d))
    return diag_power(memory.hurst, s)


def _core(cov: OfbmCovariance, t: float, u: float) -> np.ndarray:
    tH = _hpow(cov.memory, t)
    uH = _hpow(cov.memory, u)
    out = tH @ cov.r_tilde_neg @ tH + uH @ cov.r_tilde_pos @ uH
    if t != u:
        lag = abs(t - u)
        sH = diag_power(cov.memory.hurst, lag)
        branch = cov.r_tilde_pos if u > t else cov.r_tilde_neg
        out = out - sH @ branch @ sH
    return out


def ofbm_cross_cov(cov: OfbmCovariance, t: float, u: float) -> np.ndarray:
    """E[Z(t) Z(u)ᵀ] for Z = A·B_H."""
    for name, v in (("t", t), ("u", u)):
        if not (0.0 <= v <= 1.0):
            raise DomainError(f"{name}={v} outside [0, 1]")
    return cov.a_factor @ _core(cov, float(t), float(u)) @ cov.a_factor.T


def stationary_increment_residual(cov: OfbmCovariance, t: float, u: float) -> float:
    lhs = ofbm_cross_cov(cov, t, t) + ofbm_cross_cov(cov, u, u) - ofbm_cross_cov(cov, t, u) - ofbm_cross_cov(cov, u, t)
    lag = abs(t - u)
    sH = _hpow(cov.memory, lag)
    rhs = cov.a_factor @ sH @ (cov.r_tilde_pos + cov.r_tilde_neg) @ sH @ cov.a_factor.T
    return float(np.max(np.abs(lhs - rhs)))


def self_similarity_residual(cov: OfbmCovariance, a: float, t: float, u: float) -> float:
    """‖C(at, au) - M C(t, u) Mᵀ‖_max with M = A a^H A^{-1}."""
    if not a > 0:
        raise DomainError(f"scale a must be positive, got {a}")
    if a * t > 1.0 or a * u > 1.0:
        raise DomainError(f"scaled times at={a * t}, au={a * u} must stay within [0, 1]")
    A = cov.a_factor
    try:
        if abs(np.linalg.det(A)) < 1e-300:
            raise np.linalg.LinAlgError("singular")
        a_inv = np.linalg.inv(A)
    except np.linalg.LinAlgError as e:
        raise FactorizationError("a_factor is singular, cannot form A^{-1}") from e
    M = A @ diag_power(cov.memory.hurst, a) @ a_inv
    diff = ofbm_cross_cov(cov, a * t, a * u) - M @ ofbm_cross_cov(cov, t, u) @ M.T
    return float(np.max(np.abs(diff)))


def limit_kernel_f(tau: int, d_m: float, t: float, x: Sequence[float]) -> complex:
    """(e^{it Σx} - 1)/(i Σx) · Π|x_r|^{d_m - 1/2}; the first factor is t at Σx = 0."""
    if not tau * d_m < 0.5:
        raise DomainError(f"tau*d_m={tau * d_m} must be < 1/2")
    x = np.asarray(x, dtype=float)
    if np.any(x == 0.0):
        raise SingularityError("kernel is singular where a coordinate vanishes", details={"x": x.tolist()})
    s = float(np.sum(x))
    if s == 0.0:
        first = complex(t, 0.0)
    else:
        ts = t * s
        first = complex(math.sin(ts) / s, 2.0 * math.sin(0.5 * ts) ** 2 / s)
    return first * float(np.prod(np.power(np.abs(x), d_m - 0.5)))


def beta_constant(tau: int, d: float) -> float:
    """((1-τd)(1-2τd) / (τ! (2Γ(2d) sin(π(1/2-d)))^τ))^{1/2}."""
    if not (0.0 < d < 0.5):
        raise DomainError(f"d={d} outside (0, 1/2)")
    if tau < 1:
        raise DomainError(f"tau must be >= 1, got {tau}")
    if not tau * d < 0.5:
        raise DomainError(f"tau*d={tau * d} must be < 1/2")
    base = 2.0 * gamma_fn(2.0 * d) * math.sin(math.pi * (0.5 - d))
    return math.sqrt((1.0 - tau * d) * (1.0 - 2.0 * tau * d) / (math.factorial(tau) * base ** tau))


def limit_law(spec: ProcessSpec, coeffs: HermiteCoefficients) -> LimitLaw:
    if spec.kind != ProcessKind.GAUSSIAN_DIAGONAL:
        raise ContractError(f"Hermite limit law needs gaussian_diagonal, got {spec.kind.value}")
    memory = spec.require_memory()
    beta = np.array([beta_constant(coeffs.rank, d) for d in memory.values])
    return LimitLaw(
        tau=coeffs.rank,
        memory=memory,
        beta=beta,
        hermite_lead=coeffs.leading.copy(),
        r_diag=np.asarray(spec.r_diag, dtype=float),
    )
