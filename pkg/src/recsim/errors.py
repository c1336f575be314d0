"""Exceptions raised by recsim."""


class RecsimError(Exception):
    """Base class for all recsim errors."""


class UnknownModel(RecsimError):
    """Raised when a model name is not part of the zoo."""


class UnknownPlatform(RecsimError):
    """Raised when a CPU or accelerator name is not registered."""


class InvalidDistribution(RecsimError):
    """Raised when a size distribution has non-finite or out-of-range parameters."""


class ParseError(RecsimError):
    """Raised when a trace file is malformed."""

    def __init__(self, message: str, line_number: int) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ConfigError(RecsimError):
    """Raised when a scheduler or experiment configuration is inconsistent."""


class EmptyResult(RecsimError):
    """Raised when a simulation has no post-warmup queries to summarize."""


class InfeasibleSLA(RecsimError):
    """Raised when no knob setting meets the tail-latency target."""
