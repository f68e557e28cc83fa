from typing import Iterable, Optional


class PairlatError(Exception):
    """Base class for every error raised by pairlat."""


class SpecificationError(PairlatError):
    def __init__(self, message: str, modality: Optional[int] = None):
        if modality is not None:
            message = f"modality {modality}: {message}"
        super().__init__(message)
        self.modality = modality


class GraphError(PairlatError):
    pass


class ContractError(PairlatError):
    pass


class NumericOverflowError(PairlatError):
    def __init__(self, primitive: str, detail: str = ""):
        message = f"Non-finite value produced by <{primitive}>"
        if detail:
            message += f": {detail}"
        super().__init__(message)
        self.primitive = primitive


class DegenerateInputError(PairlatError):
    pass


class FormatError(PairlatError):
    def __init__(self, field: str, message: str):
        super().__init__(f"[{field}] {message}")
        self.field = field


class NonFiniteLossError(PairlatError):
    def __init__(self, step: int, term: str):
        super().__init__(f"Loss term <{term}> became non-finite at step {step}")
        self.step = step
        self.term = term


class FrozenViolationError(PairlatError):
    def __init__(self, expected: str, actual: str):
        super().__init__(
            f"Backbone parameters changed: hash {expected[:12]}... -> {actual[:12]}..."
        )
        self.expected = expected
        self.actual = actual


class ConfigError(PairlatError):
    def __init__(self, message: str, valid_keys: Iterable[str] = ()):
        self.valid_keys = sorted(valid_keys)
        if self.valid_keys:
            message += "\nValid keys: " + ", ".join(self.valid_keys)
        super().__init__(message)


class PhaseFailure(PairlatError):
    def __init__(self, phase: str, cause: BaseException):
        super().__init__(f"Phase <{phase}> failed: {cause}")
        self.phase = phase
        self.cause = cause
