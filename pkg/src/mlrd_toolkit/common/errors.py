from __future__ import annotations

from typing import Any, Dict, Optional


class MLRDError(ValueError):
    """Base error of the toolkit. Carries a stable code and optional details."""

    code = "mlrd_error"
    exit_code = 2

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = dict(details or {})

    def to_payload(self) -> Dict[str, Any]:
        return {"error": self.code, "message": self.message, "details": self.details}


class DomainError(MLRDError):
    code = "domain_error"


class SingularityError(DomainError):
    code = "singularity_error"


class ConfigurationError(MLRDError):
    code = "configuration_error"


class OrderingError(ConfigurationError):
    code = "ordering_violation"


class FactorizationError(MLRDError):
    code = "factorization_error"


class HypothesisError(MLRDError):
    code = "hypothesis_error"


class EvaluationError(MLRDError):
    code = "evaluation_error"


class ContractError(MLRDError):
    code = "contract_error"


class RankUndeterminedError(MLRDError):
    code = "rank_undetermined"


class UnsupportedOrderError(MLRDError):
    code = "unsupported_order"
