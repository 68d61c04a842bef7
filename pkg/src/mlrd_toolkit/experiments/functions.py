"""Named subordination functions. Configs reference these by name or give polynomial coefficients."""
from __future__ import annotations

from typing import Callable, Dict, List, Sequence, Union

import numpy as np
from numpy.polynomial import polynomial as P

from mlrd_toolkit.common.errors import ConfigurationError

ScalarFn = Callable[[np.ndarray], np.ndarray]
FunctionRef = Union[str, Sequence[float]]

NAMED: Dict[str, ScalarFn] = {
    "identity": lambda x: np.asarray(x, dtype=float),
    "hermite2": lambda x: np.square(x) - 1.0,
    "hermite3": lambda x: np.power(x, 3) - 3.0 * np.asarray(x),
    "square": np.square,
    "cube": lambda x: np.power(x, 3),
    "abs": np.abs,
    "cos": np.cos,
}


def resolve_function(ref: FunctionRef) -> ScalarFn:
    if isinstance(ref, str):
        fn = NAMED.get(ref.strip().lower())
        if fn is None:
            raise ConfigurationError(f"unknown subordination function '{ref}', known: {sorted(NAMED)}")
        return fn
    coeffs = np.asarray(list(ref), dtype=float)
    if coeffs.size == 0 or not np.all(np.isfinite(coeffs)):
        raise ConfigurationError(f"polynomial coefficients must be finite and non-empty, got {list(ref)}")
    return lambda x: P.polyval(np.asarray(x, dtype=float), coeffs)


def resolve_functions(refs: Sequence[FunctionRef], d: int) -> List[ScalarFn]:
    """One function per coordinate; a single reference is broadcast."""
    refs = list(refs)
    if len(refs) == 1:
        refs = refs * d
    if len(refs) != d:
        raise ConfigurationError(f"need 1 or {d} subordination functions, got {len(refs)}")
    return [resolve_function(r) for r in refs]
