"""Hermite machinery (probabilists' convention: H_2(x) = x² - 1 throughout)."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from mlrd_toolkit.common.errors import (
    ConfigurationError,
    ContractError,
    DomainError,
    EvaluationError,
    FactorizationError,
    HypothesisError,
    RankUndeterminedError,
    UnsupportedOrderError,
)
from mlrd_toolkit.core.matalg import as_square
from mlrd_toolkit.core.model import ProcessKind, ProcessSpec, gaussian_component_autocov
from mlrd_toolkit.core.simulate import SamplePath

logger = logging.getLogger("core.hermite")

SQRT_2PI = math.sqrt(2.0 * math.pi)
RANK_TOL = 1e-10
MAX_MULTI_ORDER = 4
MAX_ADDITION_ORDER = 8

ScalarFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class HermiteCoefficients:
    coefficients: np.ndarray  # (d, L_max + 1)
    rank: int
    quad_order: int
    tol: float

    @property
    def l_max(self) -> int:
        return int(self.coefficients.shape[1] - 1)

    @property
    def centers(self) -> np.ndarray:
        return self.coefficients[:, 0]

    @property
    def leading(self) -> np.ndarray:
        """h_{τ,i} for every coordinate."""
        return self.coefficients[:, self.rank]


def hermite_poly(l: int, x):
    """H_l(x) via H_{l+1} = x H_l - l H_{l-1}; vectorized over x."""
    if l < 0:
        raise DomainError(f"Hermite degree must be >= 0, got l={l}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if l == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for k in range(1, l):
        prev, cur = cur, x * cur - k * prev
    return cur if cur.ndim else float(cur)


def _gauss_nodes(quad_order: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = hermegauss(int(quad_order))
    return nodes, weights / SQRT_2PI


def gaussian_expectation(f: ScalarFn, quad_order: int = 128) -> float:
    nodes, weights = _gauss_nodes(quad_order)
    vals = np.asarray(f(nodes), dtype=float)
    return float(np.dot(weights, vals))


def hermite_coefficients(G: ScalarFn, L_max: int, quad_order: int = 128) -> np.ndarray:
    """h_l = E[G(Z) H_l(Z)] / l!, l = 0..L_max, by Gauss-Hermite quadrature."""
    if L_max < 0:
        raise DomainError(f"L_max must be >= 0, got {L_max}")
    if quad_order < 2 * L_max:
        raise ConfigurationError(f"quad_order={quad_order} must be >= 2*L_max={2 * L_max}")
    nodes, weights = _gauss_nodes(quad_order)
    vals = np.broadcast_to(np.asarray(G(nodes), dtype=float), nodes.shape)
    if not np.all(np.isfinite(vals)):
        bad = float(nodes[~np.isfinite(vals)][0])
        raise EvaluationError(f"G is not finite at quadrature node x={bad:.6g}", details={"node": bad})
    out = np.empty(L_max + 1)
    prev = np.ones_like(nodes)
    cur = nodes.copy()
    for l in range(L_max + 1):
        if l == 0:
            poly = prev
        elif l == 1:
            poly = cur
        else:
            prev, cur = cur, nodes * cur - (l - 1) * prev
            poly = cur
        out[l] = float(np.dot(weights, vals * poly)) / math.factorial(l)
    return out


def hermite_rank(coeffs: Sequence[float], tol: float = RANK_TOL) -> int:
    """Smallest l >= 1 with |h_l| > tol."""
    if not tol > 0:
        raise DomainError(f"rank tolerance must be positive, got {tol}")
    c = np.asarray(coeffs, dtype=float)
    for l in range(1, c.shape[0]):
        if abs(c[l]) > tol:
            return l
    raise RankUndeterminedError(
        f"all Hermite coefficients 1..{c.shape[0] - 1} are below tol={tol}", details={"L_max": int(c.shape[0] - 1)}
    )


def expand_subordination(
    functions: Sequence[ScalarFn], l_max: int = 8, quad_order: int = 128, tol: float = RANK_TOL
) -> HermiteCoefficients:
    """Per-coordinate expansion; every coordinate must share the same Hermite rank."""
    rows = [hermite_coefficients(G, l_max, quad_order) for G in functions]
    ranks = [hermite_rank(row, tol) for row in rows]
    if len(set(ranks)) != 1:
        raise HypothesisError(f"coordinates have different Hermite ranks: {ranks}", details={"ranks": ranks})
    logger.debug("hermite_expansion coords=%d rank=%d l_max=%d", len(rows), ranks[0], l_max)
    return HermiteCoefficients(np.vstack(rows), ranks[0], int(quad_order), float(tol))


def subordinate_values(values: np.ndarray, functions: Sequence[ScalarFn], centers: np.ndarray) -> np.ndarray:
    """G_i(x) - h_{0,i} applied along the last axis."""
    out = np.empty_like(values, dtype=float)
    for i, G in enumerate(functions):
        out[..., i] = np.asarray(G(values[..., i]), dtype=float) - centers[i]
    return out


def apply_subordination(
    path: SamplePath,
    functions: Sequence[ScalarFn],
    coeffs: Optional[HermiteCoefficients] = None,
    quad_order: int = 128,
) -> SamplePath:
    if not path.unit_gaussian:
        raise ContractError(f"subordination needs a unit-variance Gaussian path, got generator={path.generator}")
    if len(functions) != path.d:
        raise ConfigurationError(f"{len(functions)} functions for a {path.d}-dimensional path")
    if coeffs is None:
        centers = np.array([gaussian_expectation(G, quad_order) for G in functions])
    else:
        centers = coeffs.centers
    return SamplePath(
        values=subordinate_values(path.values, functions, centers),
        seed=path.seed,
        stream=path.stream,
        spec_digest=path.spec_digest,
        generator=f"subordinated:{path.generator}",
        kind=path.kind,
        truncation=path.truncation,
    )


# --- multivariate ---------------------------------------------------------


def _matchings(items: Tuple[int, ...]) -> Iterator[Tuple[List[Tuple[int, int]], List[int]]]:
    """All partial matchings of positions: (pairs, singles)."""
    if not items:
        yield [], []
        return
    first, rest = items[0], items[1:]
    for pairs, singles in _matchings(rest):
        yield pairs, [first] + singles
    for k in range(len(rest)):
        remaining = rest[:k] + rest[k + 1:]
        for pairs, singles in _matchings(remaining):
            yield [(first, rest[k])] + pairs, singles


def multivariate_hermite(q: Sequence[int], x: Sequence[float], Sigma) -> float:
    """Multivariate Hermite polynomial H_q(x, Σ), defined by (-1)^{|q|} ∂^q φ_Σ(x) / φ_Σ(x).

    Computed in closed form, not by differentiating the density. With P = Σ^{-1} and
    y = P x, q is expanded into its list of coordinate positions; every partial pairing
    of that list contributes the product of y_s over unpaired positions s times -P_ab
    over its pairs (a, b). Orders up to MAX_MULTI_ORDER.
    """
    q = tuple(int(v) for v in q)
    if any(v < 0 for v in q):
        raise DomainError(f"multi-index entries must be >= 0, got {q}")
    order = sum(q)
    if order > MAX_MULTI_ORDER:
        raise UnsupportedOrderError(f"|q|={order} exceeds the implemented order {MAX_MULTI_ORDER}")
    sigma = as_square(Sigma, "Sigma")
    x = np.asarray(x, dtype=float)
    if sigma.shape[0] != len(q) or x.shape != (len(q),):
        raise DomainError(f"shape mismatch: q has {len(q)} entries, Sigma is {sigma.shape}, x is {x.shape}")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as e:
        raise FactorizationError("Sigma is not positive definite") from e
    P = np.linalg.solve(chol.T, np.linalg.solve(chol, np.eye(len(q))))
    y = P @ x
    if order == 0:
        return 1.0
    idx = tuple(i for i, count in enumerate(q) for _ in range(count))
    if order == 1:
        return float(y[idx[0]])
    if order == 2:
        a, b = idx
        return float(y[a] * y[b] - P[a, b])
    total = 0.0
    for pairs, singles in _matchings(idx):
        term = float(np.prod([y[s] for s in singles])) if singles else 1.0
        for a, b in pairs:
            term *= -P[a, b]
        total += term
    return float(total)


def compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    """Non-negative integer vectors of length parts summing to total."""
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 1 - prev - 1)
        yield tuple(out)


def hermite_addition_check(tau: int, a: Sequence[float], x: Sequence[float]) -> float:
    """|H_τ(Σ a_j x_j) - Σ_p multinomial(τ; p) Π a_j^{p_j} H_{p_j}(x_j)| for Σ a_j² = 1."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if abs(float(np.dot(a, a)) - 1.0) >= 1e-12:
        raise DomainError(f"weights must satisfy Σa_j² = 1, got {float(np.dot(a, a))!r}")
    if tau > MAX_ADDITION_ORDER or tau < 0:
        raise UnsupportedOrderError(f"tau={tau} outside 0..{MAX_ADDITION_ORDER}")
    lhs = hermite_poly(tau, float(np.dot(a, x)))
    tau_fact = math.factorial(tau)
    rhs = 0.0
    for p in compositions(tau, len(a)):
        coef = tau_fact / math.prod(math.factorial(k) for k in p)
        term = coef
        for j, pj in enumerate(p):
            if pj:
                term *= a[j] ** pj * hermite_poly(pj, x[j])
        rhs += term
    return abs(lhs - rhs)


# --- reduction principle ----------------------------------------------------


def reduction_tail_variance(spec: ProcessSpec, coeffs: HermiteCoefficients, n: int) -> np.ndarray:
    """Var of Σ_{k<=n} Σ_{j>τ} h_j H_j(X_k) per coordinate: Σ_j h_j² j! Σ_{|k|<n} (n-|k|) r(k)^j."""
    if spec.kind != ProcessKind.GAUSSIAN_DIAGONAL:
        raise ContractError(f"reduction tail needs gaussian_diagonal, got {spec.kind.value}")
    weights = (n - np.arange(n)).astype(float)
    out = np.zeros(spec.dimension)
    for i in range(spec.dimension):
        r = gaussian_component_autocov(spec, i, n)
        for j in range(coeffs.rank + 1, coeffs.l_max + 1):
            h = coeffs.coefficients[i, j]
            if abs(h) <= coeffs.tol:
                continue
            rj = np.power(r, j)
            out[i] += h * h * math.factorial(j) * (n * rj[0] + 2.0 * float(np.dot(weights[1:], rj[1:])))
    return out


def reduction_tail_ratio(spec: ProcessSpec, coeffs: HermiteCoefficients, n: int) -> Tuple[np.ndarray, bool]:
    """Normalized tail variance at 2n over n, per coordinate; (ratios, tail_vanishes)."""
    mem = spec.require_memory().array
    exponent = 2.0 - 2.0 * coeffs.rank * mem
    tail_n = reduction_tail_variance(spec, coeffs, n) / np.power(float(n), exponent)
    tail_2n = reduction_tail_variance(spec, coeffs, 2 * n) / np.power(float(2 * n), exponent)
    vanishes = bool(np.all(tail_n == 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(tail_n > 0, tail_2n / tail_n, 0.0)
    return ratios, vanishes
