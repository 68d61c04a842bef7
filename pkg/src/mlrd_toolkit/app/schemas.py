from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from mlrd_toolkit.common.errors import ConfigurationError
from mlrd_toolkit.core.estimators import Regime
from mlrd_toolkit.core.model import InnovationFamily, ProcessKind, ProcessSpec
from mlrd_toolkit.core.simulate import GAUSSIAN_CAP, default_truncation
from mlrd_toolkit.experiments.kinds import Experiment

Matrix = List[List[float]]
FunctionRef = Union[str, List[float]]

MAX_SEED = 2 ** 64 - 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MemoryConfig(_Strict):
    values: List[float] = Field(..., min_length=1, description="memory parameters d_i in (0, 1/2)")


class Tolerances(_Strict):
    covariance: float = Field(0.15, gt=0, description="max-abs distance of covariance matrices")
    ks_alpha: float = Field(0.01, gt=0, lt=1, description="KS significance level")
    se_multiplier: float = Field(4.0, gt=0, description="distance allowance in Monte Carlo standard errors")
    ratio_low: float = Field(0.75, gt=0, description="lower bound of variance ratios across n (sqrt_n regime)")
    ratio_high: float = Field(1.33, gt=0, description="upper bound of variance ratios across n (sqrt_n regime)")
    bound_factor: float = Field(1.25, gt=1, description="boundedness factor of normalized moments (operator regime)")
    fclt_ratio: float = Field(0.2, gt=0, description="relative tolerance of the C(1/2,1/2)/C(1,1) scaling check")
    variance_order: float = Field(2.0, gt=1, description="max/min of n-scaled partial-sum variances over n_list")
    identity: float = Field(1e-10, gt=0, description="residual of exact identities of the limit covariance")
    tail_ratio: float = Field(1.0, gt=0, description="reduction tail variance ratio 2n over n must stay below this")
    asymptotic_form: float = Field(
        0.2, gt=0, description="max-abs gap of A(n)^-1 Var A(n)^-T from I for the limiting-form normalizer"
    )

    @model_validator(mode="after")
    def _ratio_order(self) -> "Tolerances":
        if not self.ratio_low < 1.0 < self.ratio_high:
            raise ValueError(f"need ratio_low < 1 < ratio_high, got {self.ratio_low}, {self.ratio_high}")
        return self


class SubordinationConfig(_Strict):
    functions: List[FunctionRef] = Field(default_factory=lambda: ["identity"], min_length=1)
    l_max: int = Field(8, ge=1, le=32)
    quad_order: int = Field(128, ge=2)
    rank_tol: float = Field(1e-10, gt=0)


class NormalizationConfig(_Strict):
    finite_n_calibration: bool = True


class ExperimentConfig(_Strict):
    """One config shape for every subcommand; unused keys are ignored by a given experiment."""

    experiment: Optional[Experiment] = None
    dimension: int = Field(..., ge=1)
    kind: ProcessKind = ProcessKind.LINEAR_LRD
    memory: Optional[MemoryConfig] = None
    a_plus: Optional[Matrix] = None
    a_minus: Optional[Matrix] = None
    a_zero: Optional[Matrix] = None
    r_diag: Optional[List[float]] = None
    innovation: InnovationFamily = InnovationFamily.STANDARD_NORMAL
    seed: int = Field(0, ge=0, le=MAX_SEED)
    n: int = Field(1024, ge=1)
    n_list: Optional[List[int]] = None
    truncation: Optional[int] = Field(None, ge=1)
    replications: int = Field(2000, ge=100)
    grid: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0], min_length=1)
    lags: List[int] = Field(default_factory=lambda: [0, 1], min_length=1)
    max_lag: int = Field(10, ge=0)
    regime: Optional[Regime] = None
    tolerances: Tolerances = Field(default_factory=Tolerances)
    subordination: SubordinationConfig = Field(default_factory=SubordinationConfig)
    normalization: NormalizationConfig = Field(default_factory=NormalizationConfig)
    threads: Optional[int] = Field(None, ge=1)
    gaussian_cap: int = Field(GAUSSIAN_CAP, ge=1)

    @model_validator(mode="after")
    def _check_shapes(self) -> "ExperimentConfig":
        if self.memory is not None and len(self.memory.values) != self.dimension:
            raise ValueError(f"memory.values has {len(self.memory.values)} entries, dimension is {self.dimension}")
        for name in ("a_plus", "a_minus", "a_zero"):
            m = getattr(self, name)
            if m is not None and (len(m) != self.dimension or any(len(row) != self.dimension for row in m)):
                raise ValueError(f"{name} must be {self.dimension}x{self.dimension}")
        if any(not (0.0 <= t <= 1.0) for t in self.grid):
            raise ValueError(f"grid points must lie in [0, 1], got {self.grid}")
        if any(h < 0 for h in self.lags):
            raise ValueError(f"lags must be non-negative, got {self.lags}")
        if self.n_list is not None and (not self.n_list or any(v < 1 for v in self.n_list)):
            raise ValueError(f"n_list entries must be >= 1, got {self.n_list}")
        return self

    # --- derived values ---------------------------------------------------

    def n_values(self) -> List[int]:
        """n_list when given, otherwise (n/4, n/2, n)."""
        if self.n_list:
            return sorted({int(v) for v in self.n_list})
        return sorted({max(1, self.n // 4), max(1, self.n // 2), self.n})

    def truncation_for(self, n: int) -> int:
        return int(self.truncation) if self.truncation is not None else default_truncation(n)

    def to_spec(self) -> ProcessSpec:
        if self.kind == ProcessKind.WHITE_NOISE:
            return ProcessSpec.white_noise(self.dimension, self.innovation)
        if self.memory is None:
            raise ConfigurationError(f"kind={self.kind.value} requires memory.values")
        if self.kind == ProcessKind.GAUSSIAN_DIAGONAL:
            if self.r_diag is None:
                raise ConfigurationError("gaussian_diagonal requires r_diag")
            return ProcessSpec.gaussian_diagonal(self.memory.values, self.r_diag)
        if self.a_plus is None or self.a_minus is None:
            raise ConfigurationError("linear_lrd requires a_plus and a_minus")
        return ProcessSpec.linear(self.memory.values, self.a_plus, self.a_minus, self.a_zero, self.innovation)

    @classmethod
    def from_spec(cls, spec: ProcessSpec, **fields: Any) -> "ExperimentConfig":
        return cls.model_validate({**spec.to_dict(), **fields})

    def echo(self) -> Dict[str, Any]:
        """Config as recorded in reports; the thread count is left out so reports do not depend on it."""
        return self.model_dump(mode="json", exclude={"threads"})

    def with_overrides(self, seed: Optional[int] = None, threads: Optional[int] = None) -> "ExperimentConfig":
        update: Dict[str, Any] = {}
        if seed is not None:
            update["seed"] = seed
        if threads is not None:
            update["threads"] = threads
        if not update:
            return self
        return parse_config({**self.model_dump(mode="json"), **update})


def parse_config(data: Any) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        errors = [{"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]} for err in e.errors()]
        first = errors[0] if errors else {"loc": "", "msg": str(e)}
        raise ConfigurationError(f"invalid config at '{first['loc']}': {first['msg']}", details={"errors": errors}) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}", details={"path": str(p)})
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config {p} is not valid JSON: {e.msg} (line {e.lineno})", details={"path": str(p)}) from e
    return parse_config(data)


def config_keys() -> List[str]:
    """Dotted names of every accepted config key, for --help."""
    keys: List[str] = []
    for name, info in ExperimentConfig.model_fields.items():
        sub = info.annotation
        nested = getattr(sub, "model_fields", None)
        if nested is None and name == "memory":
            nested = MemoryConfig.model_fields
        if nested:
            keys.extend(f"{name}.{k}" for k in nested)
        else:
            keys.append(name)
    return keys


__all__ = [
    "ExperimentConfig",
    "MemoryConfig",
    "NormalizationConfig",
    "SubordinationConfig",
    "Tolerances",
    "config_keys",
    "load_config",
    "parse_config",
]
