"""Exception types shared across the package.

Every failure mode that callers are expected to distinguish gets its own
class; all inherit from :class:`SigblendError` so the CLI can map "our"
errors to exit codes without catching unrelated bugs.
"""


class SigblendError(Exception):
    """Base class for errors raised by this package."""


class ParseError(SigblendError):
    """A data file could not be parsed; messages carry path and line number."""


class ValidationError(SigblendError):
    """Input data or arguments violate a documented invariant."""


class InsufficientHistoryError(SigblendError):
    """A series or panel is shorter than the required warm-up window."""


class AlignmentError(SigblendError):
    """Two inputs that must share an index (tickers or dates) do not."""


class DegenerateCrossSectionError(SigblendError):
    """A cross-sectional operation needs at least two assets."""


class PortfolioConstructionError(SigblendError):
    """A portfolio rule produced an unusable allocation (e.g. empty bucket)."""


class UndefinedMetricError(SigblendError):
    """A ratio metric is undefined for the given series (e.g. zero volatility)."""


class SingularDesignError(SigblendError):
    """A regression design matrix is rank deficient; names the column."""


class ShapeError(SigblendError):
    """Array shapes do not match a network or batch contract."""


class TapeError(SigblendError):
    """A backward pass was requested with a stale or foreign tape."""


class TrainingDivergenceError(SigblendError):
    """A loss or gradient became non-finite during training."""


class SchedulingError(SigblendError):
    """A delayed update was invoked off its schedule."""


class EpisodeBoundsError(SigblendError):
    """An environment was stepped past the end of its window."""


class ConfigError(SigblendError):
    """A run configuration is malformed or inconsistent."""


class CheckpointError(SigblendError):
    """A checkpoint file is unreadable or incompatible with the run."""
