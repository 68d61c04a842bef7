"""Sample autocovariances, Gaussian fourth moments and the two deviation regimes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np

from mlrd_toolkit.common.errors import ContractError, DomainError
from mlrd_toolkit.core.matalg import as_square
from mlrd_toolkit.core.model import MemoryParameters, ProcessKind, ProcessSpec, gamma_sequence, r_matrix, theoretical_gamma
from mlrd_toolkit.core.normalize import operator_normalizer
from mlrd_toolkit.core.simulate import SamplePath, default_truncation

logger = logging.getLogger("core.estimators")

BOUND_N_VALUES = (2 ** 8, 2 ** 9, 2 ** 10)


class Regime(str, Enum):
    SQRT_N = "sqrt_n"
    OPERATOR = "operator"


@dataclass
class AutocovarianceEstimate:
    h: int
    n: int
    matrix: np.ndarray
    centered: bool = False


@dataclass
class CovBoundReport:
    p: int
    q: int
    n_values: List[int]
    covariances: List[np.ndarray]
    bound: np.ndarray
    constant: float
    flags: List[bool]
    ratios: List[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.flags)

    def to_dict(self) -> Dict[str, object]:
        return {
            "p": self.p,
            "q": self.q,
            "n_values": list(self.n_values),
            "covariances": [c.tolist() for c in self.covariances],
            "bound": self.bound.tolist(),
            "constant": self.constant,
            "flags": list(self.flags),
            "ratios": list(self.ratios),
        }


def autocov_matrix(values: np.ndarray, h: int, n: int) -> np.ndarray:
    """(1/n) Σ_{k=1}^{n} X_k X_{k+h}ᵀ over the last two axes (..., N, d)."""
    return np.einsum("...ki,...kj->...ij", values[..., :n, :], values[..., h:h + n, :]) / float(n)


def sample_autocov(
    path: SamplePath, h: int, n: Optional[int] = None, spec: Optional[ProcessSpec] = None, M: Optional[int] = None
) -> AutocovarianceEstimate:
    """Uncentered Γ̂_{n,h}; with spec given, Γ_h is subtracted."""
    if h < 0:
        raise DomainError(f"lag must be non-negative, got h={h}")
    n = path.n - h if n is None else int(n)
    if n < 1 or path.n < n + h:
        raise DomainError(f"path of length {path.n} is too short for n={n}, h={h}")
    mat = autocov_matrix(path.values, h, n)
    if spec is None:
        return AutocovarianceEstimate(h=h, n=n, matrix=mat, centered=False)
    if M is None:
        M = path.truncation or default_truncation(n + h)
    gamma = theoretical_gamma(spec, h, max(int(M), h + 1))
    return AutocovarianceEstimate(h=h, n=n, matrix=mat - gamma, centered=True)


def autocov_panel(path: SamplePath, max_lag: int, n: Optional[int] = None) -> np.ndarray:
    """Γ̂_{n,h} for h = 0..max_lag, each over the same n."""
    n = path.n - max_lag if n is None else int(n)
    if n < 1 or path.n < n + max_lag:
        raise DomainError(f"path of length {path.n} is too short for n={n}, max_lag={max_lag}")
    return np.stack([autocov_matrix(path.values, h, n) for h in range(max_lag + 1)])


def isserlis_fourth(Sigma, i1: int, i2: int, i3: int, i4: int) -> float:
    """E[Z_{i1} Z_{i2} Z_{i3} Z_{i4}] for Z ~ N(0, Σ); indices are 0-based."""
    s = as_square(Sigma, "Sigma")
    if np.max(np.abs(s - s.T)) > 1e-8 * max(1.0, float(np.max(np.abs(s)))):
        raise DomainError("Sigma must be symmetric")
    w = np.linalg.eigvalsh(0.5 * (s + s.T))
    if w[0] < -1e-10 * max(1.0, float(w[-1])):
        raise DomainError(f"Sigma is not positive semi-definite (eigenvalue {w[0]:.3e})")
    return float(s[i1, i2] * s[i3, i4] + s[i1, i3] * s[i2, i4] + s[i1, i4] * s[i2, i3])


def check_regime(spec: ProcessSpec, regime: Regime) -> None:
    regime = Regime(regime)
    if spec.kind == ProcessKind.WHITE_NOISE:
        if regime == Regime.OPERATOR:
            raise DomainError("operator regime needs memory parameters in (0, 1/4); white noise has none")
        return
    for i, d in enumerate(spec.require_memory().values):
        if regime == Regime.SQRT_N and not (0.25 < d < 0.5):
            raise DomainError(f"sqrt_n regime needs d_i in (1/4, 1/2): d_{i + 1}={d}", details={"index": i + 1})
        if regime == Regime.OPERATOR and not (0.0 < d < 0.25):
            raise DomainError(f"operator regime needs d_i in (0, 1/4): d_{i + 1}={d}", details={"index": i + 1})


def regime_for(spec: ProcessSpec) -> Regime:
    """The single regime the whole memory vector belongs to."""
    if spec.kind == ProcessKind.WHITE_NOISE:
        return Regime.SQRT_N
    values = spec.require_memory().values
    if all(0.25 < d for d in values):
        return Regime.SQRT_N
    if all(d < 0.25 for d in values):
        return Regime.OPERATOR
    raise DomainError(f"memory {values} mixes the sqrt_n and operator regimes")


def normalize_deviation(deviation: np.ndarray, n: int, regime: Regime, memory: Optional[MemoryParameters]) -> np.ndarray:
    """√n·Δ, or B^{-1}(n)·nΔ·B^{-1}(n), over the last two axes."""
    if Regime(regime) == Regime.SQRT_N:
        return np.sqrt(float(n)) * deviation
    if memory is None:
        raise ContractError("operator regime needs memory parameters")
    b_inv = operator_normalizer(memory, n)
    return b_inv @ (float(n) * deviation) @ b_inv


def normalized_autocov_deviation(
    path: SamplePath, spec: ProcessSpec, h: int, regime: Regime, n: Optional[int] = None, M: Optional[int] = None
) -> np.ndarray:
    regime = Regime(regime)
    check_regime(spec, regime)
    est = sample_autocov(path, h, n, spec=spec, M=M)
    return normalize_deviation(est.matrix, est.n, regime, spec.memory)


# --- exact covariance of normalized autocovariances ----------------------------


def _two_sided(gam: np.ndarray) -> np.ndarray:
    """g(m) for m = -L..L from γ(0..L), with g(-m) = γ(m)ᵀ."""
    neg = np.transpose(gam[:0:-1], (0, 2, 1))
    return np.concatenate([neg, gam], axis=0)


def autocov_covariance(spec: ProcessSpec, n: int, p: int, q: int, M: Optional[int] = None) -> np.ndarray:
    """Cov(Γ̂_{n,p}[a,b], Γ̂_{n,q}[c,e]) as a (d, d, d, d) array, Gaussian case via Isserlis."""
    lag = n + max(p, q)
    M = default_truncation(lag) if M is None else M
    g = _two_sided(gamma_sequence(spec, lag + max(p, q), max(M, lag + max(p, q) + 1)))
    centre = (g.shape[0] - 1) // 2
    m = np.arange(-(n - 1), n)
    w = (n - np.abs(m)).astype(float)
    g_ac = g[centre + m]
    g_be = g[centre + m + q - p]
    g_ae = g[centre + m + q]
    g_bc = g[centre + m - p]
    out = np.einsum("m,mac,mbe->abce", w, g_ac, g_be) + np.einsum("m,mae,mbc->abce", w, g_ae, g_bc)
    return out / float(n) ** 2


def normalized_autocov_covariance(spec: ProcessSpec, n: int, p: int, q: int, M: Optional[int] = None) -> np.ndarray:
    """Covariance tensor of Y_p = B^{-1}(n)·nΓ̂_{n,p}·B^{-1}(n) against Y_q."""
    b_inv = operator_normalizer(spec.require_memory(), n)
    raw = autocov_covariance(spec, n, p, q, M) * float(n) ** 2
    return np.einsum("la,bm,kc,ej,abce->lmkj", b_inv, b_inv, b_inv, b_inv, raw)


def lemma_bound(R: np.ndarray, T: np.ndarray) -> np.ndarray:
    """B R*ᵀ Bᵀ |T| Bᵀ R* Bᵀ + transpose, B the upper all-ones matrix."""
    d = R.shape[0]
    B = np.triu(np.ones((d, d)))
    Rs = np.abs(R)
    core = B @ Rs.T @ B.T @ np.abs(T) @ B.T @ Rs @ B.T
    return core + core.T


def autocov_cov_bound_check(
    spec: ProcessSpec,
    p: int,
    q: int,
    T,
    n_values: Sequence[int] = BOUND_N_VALUES,
    constant: Optional[float] = None,
) -> CovBoundReport:
    """Componentwise |Cov(Y_p, Y_q)(T)| <= C·bound(T) at each n; C self-calibrated at the first n."""
    if spec.kind != ProcessKind.GAUSSIAN_DIAGONAL:
        raise ContractError(f"bound check needs gaussian_diagonal, got {spec.kind.value}")
    check_regime(spec, Regime.OPERATOR)
    T = as_square(T, "T")
    bound = lemma_bound(r_matrix(spec), T)
    covs: List[np.ndarray] = []
    ratios: List[float] = []
    for n in n_values:
        tensor = normalized_autocov_covariance(spec, int(n), p, q)
        cov_t = np.einsum("lmkj,kj->lm", tensor, T)
        covs.append(cov_t)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(bound > 0, np.abs(cov_t) / bound, np.where(np.abs(cov_t) > 0, np.inf, 0.0))
        ratios.append(float(np.max(r)))
    C = 2.0 * ratios[0] if constant is None else float(constant)
    flags = [bool(np.all(np.abs(c) <= C * bound + 1e-12)) for c in covs]
    logger.info("cov_bound_check p=%d q=%d C=%.4g flags=%s", p, q, C, flags)
    return CovBoundReport(p, q, [int(n) for n in n_values], covs, bound, C, flags, ratios)
