"""Exception hierarchy. Every error carries a JSON-friendly ``details`` dict."""
from __future__ import annotations


class PwChaosError(Exception):
    """Base class for computation errors (CLI exit code 1)."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), **self.details}


class ExpressionSyntaxError(PwChaosError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}", line=line, column=column)


class ExpressionDomainError(PwChaosError):
    pass


class ConfigError(PwChaosError):
    pass


class ExampleError(PwChaosError):
    pass


class SpectralError(PwChaosError):
    pass


class SlidingDetected(PwChaosError):
    pass


class TangencyDetected(PwChaosError):
    pass


class DomainExit(PwChaosError):
    pass


class StepUnderflow(PwChaosError):
    pass


class NoCrossing(PwChaosError):
    pass


class MelnikovError(PwChaosError):
    pass


class CertificateFails(PwChaosError):
    pass


class WindowExhausted(PwChaosError):
    pass


class BisectionBracketFails(PwChaosError):
    pass


class OutOfRegime(PwChaosError):
    pass


class BracketLost(PwChaosError):
    pass


class ToleranceUnmet(PwChaosError):
    pass


class NoSignChange(PwChaosError):
    pass


class MissingCrossing(PwChaosError):
    pass


class HypothesisFailure(PwChaosError):
    """Raised when the chaos construction is requested on a system violating its hypotheses."""
