# errors.py

from typing import Any, Dict, List, Optional


class EHDError(Exception):
    """Base class for every simulator error."""

    kind = "error"

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.step = step

    def to_record(self) -> Dict[str, Any]:
        record = {"status": "error", "kind": self.kind, "message": self.message}
        if self.step is not None:
            record["step"] = self.step
        return record


class ContractError(EHDError, ValueError):
    kind = "contract"


class DomainError(EHDError, ValueError):
    kind = "domain"


class CompatibilityError(EHDError, ValueError):
    kind = "compatibility"


class InvariantError(EHDError):
    kind = "invariant"


class ConvergenceError(EHDError):
    kind = "convergence"

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0, best: Any = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.best = best

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record["residual"] = self.residual
        record["iterations"] = self.iterations
        return record


class ConfigError(EHDError, ValueError):
    kind = "config"

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.key = key
        self.line = line

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record["key"] = self.key
        record["line"] = self.line
        return record


class RunAborted(EHDError):
    """A run stopped early; partial diagnostics are attached."""

    kind = "aborted"

    def __init__(self, cause: EHDError, records: List[Any]):
        super().__init__(f"run aborted at step {cause.step}: {cause.message}", step=cause.step)
        self.cause = cause
        self.records = records

    def to_record(self) -> Dict[str, Any]:
        record = self.cause.to_record()
        record["records_written"] = len(self.records)
        return record
