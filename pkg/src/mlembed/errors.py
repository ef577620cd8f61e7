"""Exception types shared across the package."""


class MlembedError(Exception):
    """Base class for all package errors."""


class EdgeListParseError(MlembedError):
    """Malformed edge-list input; carries the offending line number."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EmptyGraphError(MlembedError):
    """Input produced a graph with no vertices."""


class SplitError(MlembedError):
    """Train/test split cannot satisfy its contract."""


class PlanError(MlembedError):
    """Epoch or partition planning received an infeasible request."""


class SamplingError(MlembedError):
    """Negative-edge sampling was asked for more pairs than exist."""


class ConfigError(MlembedError):
    """Invalid configuration value."""
