"""
ラボ全体の例外階層。

各例外は CLI の終了コード (exit_code) と、レポートに記録する短い識別子 (kind) を持ちます。
    ConfigError 系 -> 2, GateError 系 -> 3, NumericalDivergenceError 系 -> 4
"""
from __future__ import annotations


class LabError(Exception):
    exit_code = 1
    default_kind = "error"

    def __init__(self, message: str, kind: str | None = None, **details) -> None:
        super().__init__(message)
        self.message = message
        self.kind = kind or self.default_kind
        self.details = details

    def to_record(self) -> dict:
        """diagnostic.json に書き出す辞書表現。"""
        record = {
            "error": type(self).__name__,
            "kind": self.kind,
            "message": self.message,
            "exit_code": self.exit_code,
        }
        for key, value in self.details.items():
            if isinstance(value, (int, float, str, bool)) or value is None:
                record[key] = value
            elif isinstance(value, (list, tuple)):
                record[key] = [float(v) if isinstance(v, (int, float)) else str(v) for v in value]
            else:
                record[key] = str(value)
        return record


class ConfigError(LabError):
    exit_code = 2
    default_kind = "config"


class DomainError(ConfigError):
    default_kind = "domain"


class LoopError(ConfigError):
    default_kind = "loop"

    def __init__(self, message: str, t: float | None = None, **details) -> None:
        super().__init__(message, t=t, **details)
        self.t = t


class GateError(LabError):
    exit_code = 3
    default_kind = "gate"


class FieldValidationError(GateError):
    default_kind = "field_validation"


class SliceGateError(GateError):
    default_kind = "slice_gate"


class NilpotencyGateError(GateError):
    default_kind = "nilpotency"


class DegeneracyError(GateError):
    default_kind = "degeneracy"


class WKBRefusalError(GateError):
    default_kind = "not_wkb"


class CurvatureGateError(GateError):
    default_kind = "curvature"


class PowerOverflowError(GateError):
    default_kind = "power_overflow"


class WKBLoopNotFoundError(GateError):
    default_kind = "wkb_loop_not_found"

    def __init__(self, message: str, best_margin: float = float("-inf"), **details) -> None:
        super().__init__(message, best_margin=best_margin, **details)
        self.best_margin = best_margin


class NumericalDivergenceError(LabError):
    exit_code = 4
    default_kind = "divergence"


class HitchinDivergenceError(NumericalDivergenceError):
    default_kind = "hitchin_divergence"

    def __init__(self, message: str, residual_history: list[float] | None = None, early: bool = False, **details) -> None:
        history = list(residual_history or [])
        super().__init__(message, residual_history=history, early=early, **details)
        self.residual_history = history
        self.early = early


class SliceSynthesisError(NumericalDivergenceError):
    default_kind = "slice_synthesis"

    def __init__(self, message: str, residual_history: list[float] | None = None, **details) -> None:
        history = list(residual_history or [])
        super().__init__(message, residual_history=history, **details)
        self.residual_history = history
