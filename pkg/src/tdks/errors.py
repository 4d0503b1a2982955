"""Exception types raised across the package."""


class TdksError(Exception):
    """Base class for all errors raised by tdks."""


class InvalidExponent(TdksError, ValueError):
    pass


class SolverFailure(TdksError, RuntimeError):
    pass


class NegativeDensity(TdksError, ValueError):
    pass


class InvalidLdaParams(TdksError, ValueError):
    pass


class IonOnGridNode(TdksError, ValueError):
    pass


class MissingHistory(TdksError, LookupError):
    pass


class KernelUnderresolved(TdksError, ValueError):
    pass


class PicardDivergence(TdksError, RuntimeError):
    pass


class LinearSolveFailure(TdksError, RuntimeError):
    pass


class StepFailure(TdksError, RuntimeError):
    """A propagation step failed; carries the failing step index."""

    def __init__(self, step, cause):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


class InsufficientLadder(TdksError, ValueError):
    pass


class ScenarioParseError(TdksError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = "" if line is None else f" (line {line}, column {column or 1})"
        super().__init__(message + where)
        self.line = line
        self.column = column


class ValidationError(TdksError, ValueError):
    def __init__(self, constraint, message):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


class FormatError(TdksError, ValueError):
    pass


class TruncationError(TdksError, ValueError):
    pass
