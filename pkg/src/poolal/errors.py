"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine failures."""


class DataFormatError(EngineError):
    """Raised when a dataset file cannot be parsed or violates invariants."""


class ConvergenceError(EngineError):
    """Raised when an iterative solver exceeds its iteration budget.

    Carries the final relative residual so callers can distinguish a
    near-miss from a genuinely broken system.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


class ConfigError(EngineError):
    """Raised for invalid configuration: unknown keys, bad values, missing files."""
