"""Exception hierarchy for mcf-nav."""


class McfError(Exception):
    """Base class for all mcf-nav errors."""


class InvalidDistributionError(McfError, ValueError):
    """A Gaussian has a non-positive variance or a non-finite parameter."""


class ParameterError(McfError, ValueError):
    """An operation parameter is outside its allowed range."""


class InsufficientEnsembleError(McfError, ValueError):
    """Fewer than two ensemble members were supplied."""


class DimensionError(McfError, ValueError):
    """An array does not have the shape a network expects."""


class UsageError(McfError, RuntimeError):
    """An API was called out of order (e.g. backward before forward)."""


class ConfigError(McfError, ValueError):
    """A configuration file is missing, malformed or invalid."""


class ArenaConfigError(ConfigError):
    """An arena description violates its invariants."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class BundleError(ConfigError):
    """A policy ensemble bundle is incomplete or inconsistent."""


class TrainingDivergenceError(McfError, RuntimeError):
    """A loss or gradient became non-finite."""

    def __init__(self, message: str, step: int | None = None) -> None:
        self.step = step
        super().__init__(f"{message} (step {step})" if step is not None else message)


class UnreachableError(McfError, ValueError):
    """No collision-free grid path exists between two points."""


class UndefinedMetricError(McfError, ValueError):
    """A metric was requested over an empty set of episodes."""
