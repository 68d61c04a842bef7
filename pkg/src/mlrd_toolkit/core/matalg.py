"""Small dense-matrix kernel used by every normalization.

Matrices are plain ``numpy.ndarray`` of shape (d, d); exponent vectors are 1-D arrays.
"""
from __future__ import annotations

from typing import Sequence, Union

import numpy as np
import scipy.linalg

from mlrd_toolkit.common.errors import DomainError, FactorizationError

ArrayLike = Union[np.ndarray, Sequence[float], Sequence[Sequence[float]]]

PD_EPS = 1e-12
SYMMETRY_RTOL = 1e-8


def as_square(S: ArrayLike, name: str = "matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(S, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DomainError(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{name} has non-finite entries")
    return m


def diag_power(G: ArrayLike, a: float) -> np.ndarray:
    """a^G = diag(a^{g_1}, ..., a^{g_d})."""
    g = np.atleast_1d(np.asarray(G, dtype=float))
    if not a > 0:
        raise DomainError(f"diag_power needs a > 0, got a={a}")
    return np.diag(np.power(float(a), g))


def _check_symmetric(m: np.ndarray, name: str) -> None:
    scale = max(np.max(np.abs(m)), 1.0)
    asym = np.max(np.abs(m - m.T))
    if asym > SYMMETRY_RTOL * scale:
        raise FactorizationError(
            f"{name} is not symmetric (max asymmetry {asym:.3e})",
            details={"asymmetry": float(asym)},
        )


def _eigh_pd(S: ArrayLike, eps: float, name: str) -> tuple[np.ndarray, np.ndarray]:
    m = as_square(S, name)
    _check_symmetric(m, name)
    sym = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(sym)
    lam_max = float(w[-1])
    if lam_max <= 0 or w[0] <= eps * lam_max:
        raise FactorizationError(
            f"{name} is not positive definite: eigenvalue {w[0]:.6e} vs max {lam_max:.6e}",
            details={"min_eigenvalue": float(w[0]), "max_eigenvalue": lam_max},
        )
    return w, v


def sym_inv_sqrt(S: ArrayLike, eps: float = PD_EPS) -> np.ndarray:
    """Symmetric inverse square root M = V diag(w^{-1/2}) Vᵀ, so that M S M = I."""
    w, v = _eigh_pd(S, eps, "S")
    m = (v * (1.0 / np.sqrt(w))) @ v.T
    return 0.5 * (m + m.T)


def upper_factor(S: ArrayLike, eps: float = PD_EPS) -> np.ndarray:
    """Upper-triangular A with positive diagonal and A·Aᵀ = S.

    Reverse-ordered Cholesky: factorize J S J (J the exchange matrix), reverse back.
    """
    m = as_square(S, "S")
    _eigh_pd(m, eps, "S")
    rev = m[::-1, ::-1]
    try:
        low = scipy.linalg.cholesky(0.5 * (rev + rev.T), lower=True)
    except np.linalg.LinAlgError as e:
        raise FactorizationError(f"Cholesky failed on reversed matrix: {e}") from e
    return np.ascontiguousarray(low[::-1, ::-1])


def max_abs(M: ArrayLike) -> float:
    return float(np.max(np.abs(np.asarray(M, dtype=float))))


def frobenius(M: ArrayLike) -> float:
    return float(np.linalg.norm(np.asarray(M, dtype=float), ord="fro"))
