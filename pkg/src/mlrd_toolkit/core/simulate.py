"""Path synthesis: innovations, truncated FFT filtering, exact Gaussian sampling, partial sums."""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Sequence

import numpy as np
import scipy.fft
import scipy.linalg

from mlrd_toolkit.common.errors import ConfigurationError, ContractError, DomainError, FactorizationError
from mlrd_toolkit.core.model import (
    InnovationFamily,
    ProcessKind,
    ProcessSpec,
    coefficient_block,
    coefficient_tail_bound,
    gaussian_component_autocov,
)

logger = logging.getLogger("core.simulate")

GAUSSIAN_CAP = 2 ** 13
SQRT3 = float(np.sqrt(3.0))


@dataclass
class SamplePath:
    values: np.ndarray
    seed: int
    spec_digest: str
    generator: str
    kind: ProcessKind
    innovation: InnovationFamily = InnovationFamily.STANDARD_NORMAL
    truncation: Optional[int] = None
    stream: Optional[int] = None
    meta: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] < 1:
            raise DomainError("a sample path needs n >= 1")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("sample path has non-finite values")

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def d(self) -> int:
        return int(self.values.shape[1])

    @property
    def unit_gaussian(self) -> bool:
        """True when marginals are N(0, 1): exact Gaussian sampler or Gaussian white noise."""
        if self.kind == ProcessKind.GAUSSIAN_DIAGONAL:
            return True
        return self.kind == ProcessKind.WHITE_NOISE and self.innovation == InnovationFamily.STANDARD_NORMAL


@dataclass
class PartialSumPath:
    grid: np.ndarray
    sums: np.ndarray


def make_rng(seed: int, stream: Optional[int] = None) -> np.random.Generator:
    """Counter-based generator; stream is the replication index."""
    key = () if stream is None else (int(stream),)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def draw_innovations(law: InnovationFamily, rng: np.random.Generator, shape: tuple) -> np.ndarray:
    law = InnovationFamily(law)
    if law == InnovationFamily.STANDARD_NORMAL:
        return rng.standard_normal(shape)
    if law == InnovationFamily.RADEMACHER:
        return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
    return rng.uniform(-SQRT3, SQRT3, size=shape)


def gen_innovations(
    law: InnovationFamily, count: int, d: int, seed: int, stream: Optional[int] = None
) -> np.ndarray:
    """count x d i.i.d. rows with zero mean and identity covariance."""
    if count < 1:
        raise DomainError(f"innovation count must be >= 1, got {count}")
    return draw_innovations(law, make_rng(seed, stream), (int(count), int(d)))


def default_truncation(n: int) -> int:
    return 10 * int(n)


class LinearFilter:
    """Truncated two-sided filter X_k = Σ_{|s|<=M} A_s ε_{k+s} with cached kernel spectra."""

    def __init__(self, spec: ProcessSpec, n: int, M: Optional[int] = None) -> None:
        if spec.kind != ProcessKind.LINEAR_LRD:
            raise ContractError(f"LinearFilter requires linear_lrd, got {spec.kind.value}")
        self.spec = spec
        self.n = int(n)
        self.M = default_truncation(n) if M is None else int(M)
        if self.M < self.n:
            raise ConfigurationError(f"truncation M={self.M} must be >= n={self.n}")
        self.d = spec.dimension
        self.panel_len = self.n + 2 * self.M
        width = 2 * self.M + 1
        self.nfft = scipy.fft.next_fast_len(self.panel_len + width - 1, real=True)
        block = coefficient_block(spec, self.M)
        # correlation with c == convolution with the reversed kernel
        self._kernel_spec = scipy.fft.rfft(block[::-1], n=self.nfft, axis=0)  # (nf, d, d)
        self.tail_bound = coefficient_tail_bound(spec, self.M)
        logger.debug("filter_ready n=%d M=%d nfft=%d", self.n, self.M, self.nfft)

    def apply(self, panel: np.ndarray) -> np.ndarray:
        if panel.shape != (self.panel_len, self.d):
            raise DomainError(f"innovation panel must be {(self.panel_len, self.d)}, got {panel.shape}")
        spectrum = scipy.fft.rfft(panel, n=self.nfft, axis=0)  # (nf, d)
        out = scipy.fft.irfft(np.einsum("flq,fq->fl", self._kernel_spec, spectrum), n=self.nfft, axis=0)
        start = 2 * self.M
        return out[start:start + self.n]

    def sample(self, seed: int, stream: Optional[int] = None) -> SamplePath:
        panel = gen_innovations(self.spec.innovation, self.panel_len, self.d, seed, stream)
        return SamplePath(
            values=self.apply(panel),
            seed=int(seed),
            stream=stream,
            spec_digest=self.spec.digest(),
            generator="fft_linear_filter",
            kind=self.spec.kind,
            innovation=self.spec.innovation,
            truncation=self.M,
            meta={"tail_variance_bound": self.tail_bound},
        )


_FILTER_LOCK = threading.Lock()
_FILTERS: Dict[tuple, LinearFilter] = {}


def get_filter(spec: ProcessSpec, n: int, M: Optional[int]) -> LinearFilter:
    key = (spec.digest(), int(n), default_truncation(n) if M is None else int(M))
    with _FILTER_LOCK:
        filt = _FILTERS.get(key)
        if filt is None:
            filt = LinearFilter(spec, n, M)
            _FILTERS.clear()
            _FILTERS[key] = filt
        return filt


def simulate_linear(spec: ProcessSpec, n: int, M: Optional[int], seed: int, stream: Optional[int] = None) -> SamplePath:
    if spec.kind != ProcessKind.LINEAR_LRD:
        raise ContractError(f"simulate_linear requires linear_lrd, got {spec.kind.value}")
    return get_filter(spec, n, M).sample(seed, stream)


@lru_cache(maxsize=32)
def _toeplitz_cholesky(d_i: float, r_ii: float, n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    col = np.empty(n)
    col[0] = 1.0
    col[1:] = r_ii * np.power(k[1:], -2.0 * d_i)
    try:
        low = scipy.linalg.cholesky(scipy.linalg.toeplitz(col), lower=True)
    except np.linalg.LinAlgError as e:
        raise FactorizationError(
            f"Toeplitz covariance with d={d_i}, R_ii={r_ii} is not positive definite at n={n}; "
            "use a smaller R_ii",
            details={"d": d_i, "r_ii": r_ii, "n": n},
        ) from e
    low.setflags(write=False)
    return low


def _gaussian_factors(spec: ProcessSpec, n: int, cap: int) -> list:
    if spec.kind != ProcessKind.GAUSSIAN_DIAGONAL:
        raise ContractError(f"exact Gaussian sampling requires gaussian_diagonal, got {spec.kind.value}")
    if n * spec.dimension > cap:
        raise ConfigurationError(f"n*d={n * spec.dimension} exceeds the dense sampling cap {cap}")
    mem = spec.require_memory().values
    return [_toeplitz_cholesky(float(mem[i]), float(spec.r_diag[i]), int(n)) for i in range(spec.dimension)]


def simulate_gaussian_exact(
    spec: ProcessSpec, n: int, seed: int, stream: Optional[int] = None, cap: int = GAUSSIAN_CAP
) -> SamplePath:
    """Independent components, each exact from its n x n Toeplitz covariance."""
    factors = _gaussian_factors(spec, n, cap)
    z = make_rng(seed, stream).standard_normal((int(n), spec.dimension))
    values = np.column_stack([factors[i] @ z[:, i] for i in range(spec.dimension)])
    return SamplePath(
        values=values,
        seed=int(seed),
        stream=stream,
        spec_digest=spec.digest(),
        generator="toeplitz_cholesky",
        kind=spec.kind,
    )


def sample_gaussian_panel(
    spec: ProcessSpec, n: int, seed: int, streams: Sequence[int], cap: int = GAUSSIAN_CAP
) -> np.ndarray:
    """Batch of exact Gaussian paths, shape (len(streams), n, d); one stream per replication."""
    factors = _gaussian_factors(spec, n, cap)
    z = np.stack([make_rng(seed, s).standard_normal((int(n), spec.dimension)) for s in streams])
    out = np.empty_like(z)
    for i, low in enumerate(factors):
        out[:, :, i] = z[:, :, i] @ low.T
    return out


def simulate(spec: ProcessSpec, n: int, seed: int, M: Optional[int] = None, stream: Optional[int] = None,
             cap: int = GAUSSIAN_CAP) -> SamplePath:
    """Dispatch on the process kind."""
    if spec.kind == ProcessKind.LINEAR_LRD:
        return simulate_linear(spec, n, M, seed, stream)
    if spec.kind == ProcessKind.GAUSSIAN_DIAGONAL:
        return simulate_gaussian_exact(spec, n, seed, stream, cap)
    return SamplePath(
        values=gen_innovations(spec.innovation, n, spec.dimension, seed, stream),
        seed=int(seed),
        stream=stream,
        spec_digest=spec.digest(),
        generator="iid",
        kind=spec.kind,
        innovation=spec.innovation,
    )


def grid_indices(n: int, grid: Sequence[float]) -> np.ndarray:
    t = np.asarray(grid, dtype=float)
    if t.size and (np.any(t < 0.0) or np.any(t > 1.0)):
        bad = float(t[(t < 0.0) | (t > 1.0)][0])
        raise DomainError(f"grid point t={bad} outside [0, 1]")
    return np.floor(np.round(n * t, 9)).astype(int)


def partial_sums(values: np.ndarray, grid: Sequence[float]) -> np.ndarray:
    """S_{floor(nt)} for values of shape (..., n, d); returns (..., len(grid), d)."""
    n = values.shape[-2]
    idx = grid_indices(n, grid)
    zero = np.zeros(values.shape[:-2] + (1, values.shape[-1]))
    cums = np.concatenate([zero, np.cumsum(values, axis=-2)], axis=-2)
    return cums[..., idx, :]


def partial_sum_path(path: SamplePath, grid: Sequence[float]) -> PartialSumPath:
    t = np.asarray(grid, dtype=float)
    return PartialSumPath(grid=t, sums=partial_sums(path.values, t))


def simulate_panel(
    spec: ProcessSpec, n: int, seed: int, streams: Sequence[int], M: Optional[int] = None, cap: int = GAUSSIAN_CAP
) -> np.ndarray:
    """Replication batch (len(streams), n, d) for any kind; stream s gives the same path as simulate(..., stream=s)."""
    if spec.kind == ProcessKind.GAUSSIAN_DIAGONAL:
        return sample_gaussian_panel(spec, n, seed, streams, cap)
    return np.stack([simulate(spec, n, seed, M=M, stream=s).values for s in streams])
