"""Process specifications of multivariate long-range dependent sequences.

Convention used everywhere in the package: γ(k) = E(X_0 X_kᵀ) = Σ_j A_j A_{j-k}ᵀ,
and γ_ij(k) ~ R_ij k^{-d_i-d_j} as k → ∞.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy.fft
from scipy.special import gammaln

from mlrd_toolkit.common.errors import (
    ConfigurationError,
    ContractError,
    DomainError,
    FactorizationError,
    HypothesisError,
    OrderingError,
)
from mlrd_toolkit.core.matalg import as_square

logger = logging.getLogger("core.model")

POLE_TOL = 1e-9
DET_TOL = 1e-10
GAUSSIAN_FACTOR_LEN = 256


class ProcessKind(str, Enum):
    LINEAR_LRD = "linear_lrd"
    GAUSSIAN_DIAGONAL = "gaussian_diagonal"
    WHITE_NOISE = "white_noise"


class InnovationFamily(str, Enum):
    STANDARD_NORMAL = "standard_normal"
    RADEMACHER = "rademacher"
    UNIFORM_SCALED = "uniform_scaled"


@dataclass(frozen=True)
class MemoryParameters:
    values: tuple

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise DomainError("memory parameters must be non-empty")
        for i, v in enumerate(vals):
            if not (0.0 < v < 0.5):
                raise DomainError(f"memory parameter d_{i + 1}={v} outside (0, 1/2)", details={"index": i + 1})
        object.__setattr__(self, "values", vals)

    @property
    def d(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @property
    def hurst(self) -> np.ndarray:
        """Diagonal of the self-similarity exponent H = I - D."""
        return 1.0 - self.array

    def ordering_violation(self) -> Optional[int]:
        """1-based index i with d_i <= d_{i+1}, or None when strictly decreasing."""
        for i in range(self.d - 1):
            if not self.values[i] > self.values[i + 1]:
                return i + 1
        return None

    @property
    def strictly_decreasing(self) -> bool:
        return self.ordering_violation() is None


@dataclass(frozen=True, eq=False)
class SlowlyVaryingSpec:
    a_plus: np.ndarray
    a_minus: np.ndarray
    j0_coefficient: np.ndarray
    mode: str = "constant"

    def __post_init__(self) -> None:
        if self.mode != "constant":
            raise ConfigurationError(f"unsupported slowly varying mode: {self.mode}")
        a_plus = as_square(self.a_plus, "a_plus")
        a_minus = as_square(self.a_minus, "a_minus")
        a_zero = as_square(self.j0_coefficient, "a_zero")
        if not (a_plus.shape == a_minus.shape == a_zero.shape):
            raise ConfigurationError(
                f"coefficient shapes differ: a_plus {a_plus.shape}, a_minus {a_minus.shape}, a_zero {a_zero.shape}"
            )
        object.__setattr__(self, "a_plus", a_plus)
        object.__setattr__(self, "a_minus", a_minus)
        object.__setattr__(self, "j0_coefficient", a_zero)


@dataclass(frozen=True, eq=False)
class ProcessSpec:
    kind: ProcessKind
    dimension: int
    memory: Optional[MemoryParameters] = None
    slowly_varying: Optional[SlowlyVaryingSpec] = None
    innovation: InnovationFamily = InnovationFamily.STANDARD_NORMAL
    r_diag: Optional[tuple] = None

    def __post_init__(self) -> None:
        d = int(self.dimension)
        if d < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {d}")
        if self.kind != ProcessKind.WHITE_NOISE:
            if self.memory is None:
                raise ConfigurationError(f"kind={self.kind.value} requires memory parameters")
            if self.memory.d != d:
                raise ConfigurationError(f"memory has {self.memory.d} values, dimension is {d}")
        if self.kind == ProcessKind.LINEAR_LRD:
            if self.slowly_varying is None:
                raise ConfigurationError("linear_lrd requires a_plus and a_minus")
            if self.slowly_varying.a_plus.shape[0] != d:
                raise ConfigurationError(f"coefficient matrices must be {d}x{d}")
        if self.kind == ProcessKind.GAUSSIAN_DIAGONAL:
            if self.r_diag is None or len(self.r_diag) != d:
                raise ConfigurationError(f"gaussian_diagonal requires r_diag with {d} entries")
            r = tuple(float(x) for x in self.r_diag)
            if any(x == 0.0 or not np.isfinite(x) for x in r):
                raise ConfigurationError(f"r_diag entries must be finite and non-zero, got {r}")
            object.__setattr__(self, "r_diag", r)

    # --- factories -------------------------------------------------------

    @classmethod
    def linear(
        cls,
        values: Sequence[float],
        a_plus: Any,
        a_minus: Any,
        a_zero: Any = None,
        innovation: InnovationFamily = InnovationFamily.STANDARD_NORMAL,
    ) -> "ProcessSpec":
        memory = MemoryParameters(tuple(values))
        a_plus = as_square(a_plus, "a_plus")
        sv = SlowlyVaryingSpec(a_plus, as_square(a_minus, "a_minus"), a_plus if a_zero is None else a_zero)
        return cls(ProcessKind.LINEAR_LRD, memory.d, memory, sv, InnovationFamily(innovation))

    @classmethod
    def gaussian_diagonal(cls, values: Sequence[float], r_diag: Sequence[float]) -> "ProcessSpec":
        memory = MemoryParameters(tuple(values))
        return cls(ProcessKind.GAUSSIAN_DIAGONAL, memory.d, memory, r_diag=tuple(r_diag))

    @classmethod
    def white_noise(
        cls, dimension: int, innovation: InnovationFamily = InnovationFamily.STANDARD_NORMAL
    ) -> "ProcessSpec":
        return cls(ProcessKind.WHITE_NOISE, int(dimension), innovation=InnovationFamily(innovation))

    # --- serialization ---------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"dimension": self.dimension, "kind": self.kind.value, "innovation": self.innovation.value}
        if self.memory is not None:
            out["memory"] = {"values": list(self.memory.values)}
        if self.slowly_varying is not None:
            out["a_plus"] = self.slowly_varying.a_plus.tolist()
            out["a_minus"] = self.slowly_varying.a_minus.tolist()
            out["a_zero"] = self.slowly_varying.j0_coefficient.tolist()
        if self.r_diag is not None:
            out["r_diag"] = list(self.r_diag)
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def require_memory(self) -> MemoryParameters:
        if self.memory is None:
            raise ContractError(f"kind={self.kind.value} has no memory parameters")
        return self.memory


@dataclass(frozen=True, eq=False)
class RMatrix:
    entries: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray


@dataclass
class AdmissibilityReport:
    c1: bool
    c2: bool
    ordering: bool
    r_invertible: bool
    c2_values: List[float] = field(default_factory=list)
    messages: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.c1 and self.c2 and self.ordering and self.r_invertible

    def to_dict(self) -> Dict[str, Any]:
        return {
            "C1": self.c1,
            "C2": self.c2,
            "ordering": self.ordering,
            "R_invertible": self.r_invertible,
            "c2_values": list(self.c2_values),
            "messages": list(self.messages),
        }


# --- coefficients ----------------------------------------------------------


def _require_linear(spec: ProcessSpec, op: str) -> SlowlyVaryingSpec:
    if spec.kind != ProcessKind.LINEAR_LRD or spec.slowly_varying is None:
        raise ContractError(f"{op} requires a linear_lrd spec, got kind={spec.kind.value}")
    return spec.slowly_varying


def lrd_coefficient(spec: ProcessSpec, j: int) -> np.ndarray:
    """A_j with (l, m) entry L_lm(j)|j|^{-d_l-1/2}; A_0 is the explicit j0 coefficient."""
    sv = _require_linear(spec, "lrd_coefficient")
    j = int(j)
    if j == 0:
        return sv.j0_coefficient.copy()
    scale = np.power(float(abs(j)), -spec.require_memory().array - 0.5)
    base = sv.a_plus if j > 0 else sv.a_minus
    return scale[:, None] * base


def coefficient_block(spec: ProcessSpec, M: int) -> np.ndarray:
    """All A_j for j = -M..M stacked along axis 0 (index j + M)."""
    sv = _require_linear(spec, "coefficient_block")
    M = int(M)
    if M < 0:
        raise ConfigurationError(f"truncation must be non-negative, got M={M}")
    d = spec.dimension
    mags = np.arange(1, M + 1, dtype=float)
    powers = np.power(mags[:, None], -spec.require_memory().array[None, :] - 0.5)  # (M, d)
    block = np.empty((2 * M + 1, d, d))
    block[M + 1:] = powers[:, :, None] * sv.a_plus[None, :, :]
    block[:M] = (powers[:, :, None] * sv.a_minus[None, :, :])[::-1]
    block[M] = sv.j0_coefficient
    return block


def coefficient_square_sum(spec: ProcessSpec, M: int) -> float:
    """Σ_{|j|<=M} ‖A_j‖_F², the summability quantity of the linear representation."""
    block = coefficient_block(spec, M)
    return float(np.sum(block * block))


def coefficient_tail_bound(spec: ProcessSpec, M: int) -> float:
    """Σ_{|j|>M} ‖A_j‖_F² in closed form up to a Hurwitz-zeta tail (integral bound)."""
    sv = _require_linear(spec, "coefficient_tail_bound")
    d = spec.require_memory().array
    plus = np.sum(sv.a_plus ** 2, axis=1)
    minus = np.sum(sv.a_minus ** 2, axis=1)
    # Σ_{j>M} j^{-2d-1} <= M^{-2d}/(2d)
    tail = np.power(float(max(M, 1)), -2.0 * d) / (2.0 * d)
    return float(np.sum((plus + minus) * tail))


# --- R matrix and admissibility -------------------------------------------


def _alpha(memory: MemoryParameters) -> np.ndarray:
    # The Γ/sine constants of the cross-sum asymptotics are stated in α = 1/2 - d.
    return 0.5 - memory.array


def limiting_R(spec: ProcessSpec) -> RMatrix:
    """R of γ(k) ~ k^{-D} R k^{-D} for a linear spec in constant slowly varying mode."""
    sv = _require_linear(spec, "limiting_R")
    alpha = _alpha(spec.require_memory())
    a_i = alpha[:, None]
    a_j = alpha[None, :]
    s = np.sin(np.pi * (a_i + a_j))
    bad = np.argwhere(np.abs(s) < POLE_TOL)
    if bad.size:
        i, j = (int(x) + 1 for x in bad[0])
        raise DomainError(f"sine pole at (i,j)=({i},{j}): d_i+d_j too close to 1", details={"i": i, "j": j})

    c1 = sv.a_minus @ sv.a_minus.T
    c2 = sv.a_minus @ sv.a_plus.T
    c3 = sv.a_plus @ sv.a_plus.T
    beta = np.exp(gammaln(a_i) + gammaln(a_j) - gammaln(a_i + a_j))
    bracket = c1 * np.sin(np.pi * a_j) / s + c2.T + c3 * np.sin(np.pi * a_i) / s
    return RMatrix(entries=beta * bracket, c1=c1, c2=c2, c3=c3)


def r_matrix(spec: ProcessSpec) -> np.ndarray:
    if spec.kind == ProcessKind.LINEAR_LRD:
        return limiting_R(spec).entries
    if spec.kind == ProcessKind.GAUSSIAN_DIAGONAL:
        return np.diag(np.asarray(spec.r_diag, dtype=float))
    raise ContractError("white_noise has no long-range dependence matrix R")


def _hadamard_ratio(m: np.ndarray) -> float:
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0):
        return 0.0
    return float(abs(np.linalg.det(m)) / np.prod(norms))


def check_conditions(spec: ProcessSpec) -> AdmissibilityReport:
    """C1 (invertible A±), C2 (non-vanishing diagonal constants), ordering, R invertibility."""
    if spec.kind == ProcessKind.WHITE_NOISE:
        return AdmissibilityReport(True, True, True, True, messages=["white_noise: conditions not applicable"])

    memory = spec.require_memory()
    report = AdmissibilityReport(c1=True, c2=True, ordering=True, r_invertible=True)
    violation = memory.ordering_violation()
    if violation is not None:
        report.ordering = False
        report.messages.append(
            f"memory parameters not strictly decreasing at index {violation}: "
            f"d_{violation}={memory.values[violation - 1]} <= d_{violation + 1}={memory.values[violation]}"
        )

    if spec.kind == ProcessKind.GAUSSIAN_DIAGONAL:
        R = r_matrix(spec)
        report.r_invertible = bool(np.all(np.abs(np.diag(R)) > DET_TOL))
        return report

    sv = spec.slowly_varying
    assert sv is not None
    for name, m in (("a_plus", sv.a_plus), ("a_minus", sv.a_minus)):
        if _hadamard_ratio(m) <= DET_TOL:
            report.c1 = False
            report.messages.append(f"C1 failed: {name} is singular")

    alpha = _alpha(memory)
    c_ii = np.sin(np.pi * alpha) / np.sin(2.0 * np.pi * alpha)
    diag_sum = np.diag(sv.a_minus @ sv.a_minus.T + sv.a_plus @ sv.a_plus.T)
    cross = np.diag(sv.a_minus @ sv.a_plus.T)
    values = c_ii * diag_sum + cross
    report.c2_values = [float(v) for v in values]
    for i, v in enumerate(values):
        if not abs(v) > DET_TOL:
            report.c2 = False
            report.messages.append(f"C2 failed at i={i + 1}: value {v:.3e}")

    try:
        R = limiting_R(spec).entries
        report.r_invertible = _hadamard_ratio(R) > DET_TOL and bool(np.all(np.diag(R) != 0))
    except DomainError as e:
        report.r_invertible = False
        report.messages.append(str(e))
    if not report.r_invertible:
        report.messages.append("R is not invertible")
    return report


def ensure_admissible(spec: ProcessSpec) -> AdmissibilityReport:
    """check_conditions, raising the matching error on the first failure."""
    report = check_conditions(spec)
    if not report.ordering:
        raise OrderingError(report.messages[0], details=report.to_dict())
    if not (report.c1 and report.c2 and report.r_invertible):
        raise HypothesisError("; ".join(report.messages), details=report.to_dict())
    if spec.kind == ProcessKind.GAUSSIAN_DIAGONAL:
        _check_gaussian_factorizable(spec, GAUSSIAN_FACTOR_LEN)
    logger.debug("spec_admissible kind=%s digest=%s", spec.kind.value, spec.digest()[:12])
    return report


def _check_gaussian_factorizable(spec: ProcessSpec, n: int) -> None:
    for i in range(spec.dimension):
        col = gaussian_component_autocov(spec, i, n)
        try:
            np.linalg.cholesky(_toeplitz(col))
        except np.linalg.LinAlgError as e:
            raise FactorizationError(
                f"Toeplitz covariance of component {i + 1} is not positive definite at n={n}; "
                f"use a smaller r_diag[{i}] (now {spec.r_diag[i]})",
                details={"component": i + 1, "n": n},
            ) from e


def _toeplitz(col: np.ndarray) -> np.ndarray:
    n = col.shape[0]
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    return col[idx]


# --- autocovariances ------------------------------------------------------


def gaussian_component_autocov(spec: ProcessSpec, i: int, n_lags: int) -> np.ndarray:
    """r_i(k), k = 0..n_lags-1, with r_i(0) = 1 and r_i(k) = R_ii k^{-2d_i}."""
    d_i = spec.require_memory().values[i]
    r_ii = spec.r_diag[i]
    k = np.arange(n_lags, dtype=float)
    out = np.empty(n_lags)
    out[0] = 1.0
    if n_lags > 1:
        out[1:] = r_ii * np.power(k[1:], -2.0 * d_i)
    return out


def theoretical_gamma(spec: ProcessSpec, k: int, M: int) -> np.ndarray:
    """γ(k) = Σ_{|j|<=M, |j-k|<=M} A_j A_{j-k}ᵀ for linear specs; closed forms otherwise."""
    k = int(k)
    if k < 0:
        raise DomainError(f"lag must be non-negative, got k={k}")
    d = spec.dimension
    if spec.kind == ProcessKind.WHITE_NOISE:
        return np.eye(d) if k == 0 else np.zeros((d, d))
    if spec.kind == ProcessKind.GAUSSIAN_DIAGONAL:
        if k == 0:
            return np.eye(d)
        mem = spec.require_memory().array
        return np.diag(np.asarray(spec.r_diag) * np.power(float(k), -2.0 * mem))
    if M < k + 1:
        raise ConfigurationError(f"truncation M={M} must be >= k+1={k + 1}")
    block = coefficient_block(spec, M)
    width = 2 * M + 1
    return np.einsum("jim,jlm->il", block[k:], block[: width - k])


def gamma_sequence(spec: ProcessSpec, max_lag: int, M: int) -> np.ndarray:
    """γ(0..max_lag) stacked on axis 0; FFT cross-correlation for linear specs."""
    max_lag = int(max_lag)
    if max_lag < 0:
        raise DomainError(f"max_lag must be non-negative, got {max_lag}")
    d = spec.dimension
    if spec.kind != ProcessKind.LINEAR_LRD:
        return _closed_form_sequence(spec, max_lag)
    if M < max_lag + 1:
        raise ConfigurationError(f"truncation M={M} must be >= max_lag+1={max_lag + 1}")
    block = coefficient_block(spec, M)
    width = block.shape[0]
    nfft = scipy.fft.next_fast_len(2 * width - 1, real=True)
    spectrum = scipy.fft.rfft(block, n=nfft, axis=0)
    cross = np.einsum("fim,flm->fil", spectrum, np.conj(spectrum))
    corr = scipy.fft.irfft(cross, n=nfft, axis=0)
    return np.ascontiguousarray(corr[: max_lag + 1].reshape(max_lag + 1, d, d))


def _closed_form_sequence(spec: ProcessSpec, max_lag: int) -> np.ndarray:
    d = spec.dimension
    out = np.zeros((max_lag + 1, d, d))
    out[0] = np.eye(d)
    if spec.kind == ProcessKind.GAUSSIAN_DIAGONAL:
        for i in range(d):
            out[:, i, i] = gaussian_component_autocov(spec, i, max_lag + 1)
    return out


def scaled_gamma(spec: ProcessSpec, k: int, M: int) -> np.ndarray:
    """k^{d_i+d_j} γ_ij(k): converges to R entrywise."""
    mem = spec.require_memory().array
    scale = np.power(float(k), mem[:, None] + mem[None, :])
    return scale * theoretical_gamma(spec, k, M)


def extrapolated_R(spec: ProcessSpec, lags: Sequence[int], M: int) -> np.ndarray:
    """R from k^{d_i+d_j}γ_ij(k) at several lags, removing the k^{d_i-1/2} and k^{d_j-1/2} terms.

    The lattice sum differs from its integral limit by terms of those orders, which decay
    slowly for memory close to 1/2.
    """
    lags = [int(k) for k in lags]
    mem = spec.require_memory().array
    d = spec.dimension
    values = np.stack([scaled_gamma(spec, k, M) for k in lags])  # (L, d, d)
    ks = np.asarray(lags, dtype=float)
    out = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            exps = sorted({0.0, round(mem[i] - 0.5, 12), round(mem[j] - 0.5, 12)}, reverse=True)
            if len(lags) < len(exps):
                raise ConfigurationError(f"need at least {len(exps)} lags for entry ({i + 1},{j + 1})")
            basis = np.column_stack([np.power(ks, e) for e in exps])
            coef, *_ = np.linalg.lstsq(basis, values[:, i, j], rcond=None)
            out[i, j] = coef[0]
    return out
