"""Performance metrics over daily return and turnover series.

Conventions: 252 trading days per year; volatility and downside
deviation use population standard deviations; the risk-free input may be
a scalar or a series aligned with the returns. Undefined ratios raise
:class:`UndefinedMetricError` instead of returning NaN, with one
exception: a Sortino ratio over a series with no negative excess returns
is reported as +infinity together with an explicit flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHistoryError, UndefinedMetricError, ValidationError

TRADING_DAYS_PER_YEAR = 252


@dataclass(frozen=True)
class PerformanceSummary:
    """Annualized headline statistics for one strategy run."""

    ann_return: float
    ann_vol: float
    sharpe: float
    sortino: float
    sortino_infinite: bool
    max_drawdown: float
    ann_turnover: float

    def to_dict(self) -> dict:
        return {
            "ann_return": self.ann_return,
            "ann_vol": self.ann_vol,
            "sharpe": self.sharpe,
            "sortino": None if self.sortino_infinite else self.sortino,
            "sortino_infinite": self.sortino_infinite,
            "max_drawdown": self.max_drawdown,
            "ann_turnover": self.ann_turnover,
        }


def _as_returns(returns) -> np.ndarray:
    arr = np.asarray(returns, dtype=float)
    if arr.ndim != 1 or len(arr) == 0:
        raise ValidationError(f"expected a non-empty 1-D return series, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError("return series contains non-finite values")
    return arr


def _excess(returns: np.ndarray, rf) -> np.ndarray:
    rf_arr = np.asarray(rf, dtype=float)
    if rf_arr.ndim == 0:
        return returns - float(rf_arr)
    if rf_arr.shape != returns.shape:
        raise ValidationError(f"rf shape {rf_arr.shape} does not match returns {returns.shape}")
    return returns - rf_arr


def annualized_return(returns) -> float:
    """Geometric annualization: (prod(1 + r))^(252/n) - 1."""
    r = _as_returns(returns)
    growth = float(np.prod(1.0 + r))
    if growth <= 0.0:
        raise UndefinedMetricError("cumulative growth is non-positive; geometric mean undefined")
    return growth ** (TRADING_DAYS_PER_YEAR / len(r)) - 1.0


def annualized_vol(returns) -> float:
    """Population standard deviation scaled by sqrt(252)."""
    r = _as_returns(returns)
    return float(r.std()) * math.sqrt(TRADING_DAYS_PER_YEAR)


def sharpe_ratio(returns, rf=0.0) -> float:
    """mean(r - rf) / std(r - rf) * sqrt(252); zero dispersion is an error."""
    excess = _excess(_as_returns(returns), rf)
    std = float(excess.std())
    if std == 0.0:
        raise UndefinedMetricError("sharpe undefined: excess returns have zero volatility")
    return float(excess.mean()) / std * math.sqrt(TRADING_DAYS_PER_YEAR)


def downside_deviation(returns, rf=0.0) -> float:
    """Root mean square of the negative excess returns (over the full n)."""
    excess = _excess(_as_returns(returns), rf)
    negative = np.minimum(excess, 0.0)
    return math.sqrt(float(np.mean(negative**2)))


def sortino_ratio(returns, rf=0.0) -> float:
    """mean(r - rf) / downside deviation * sqrt(252).

    Returns +infinity when the series has no negative excess returns;
    callers that need to distinguish should check ``math.isinf``.
    """
    excess = _excess(_as_returns(returns), rf)
    dd = downside_deviation(returns, rf)
    if dd == 0.0:
        return math.inf
    return float(excess.mean()) / dd * math.sqrt(TRADING_DAYS_PER_YEAR)


def nav_from_returns(returns, initial: float = 1.0) -> np.ndarray:
    """Compounded value path; element i is the value after return i."""
    r = _as_returns(returns)
    return initial * np.cumprod(1.0 + r)


def drawdown_series(nav) -> np.ndarray:
    """Per-day drawdown from the running peak; always <= 0."""
    nav = np.asarray(nav, dtype=float)
    if nav.ndim != 1 or len(nav) == 0:
        raise ValidationError(f"expected a non-empty 1-D nav series, got shape {nav.shape}")
    if not np.isfinite(nav).all() or nav.min() <= 0.0:
        raise ValidationError("nav must be positive and finite throughout")
    peaks = np.maximum.accumulate(nav)
    return nav / peaks - 1.0


def max_drawdown(nav) -> float:
    """Largest peak-to-trough loss of a value path (a number in [-1, 0])."""
    return float(drawdown_series(nav).min())


def annualized_turnover(turnover) -> float:
    """Mean daily turnover scaled to a 252-day year."""
    t = np.asarray(turnover, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise ValidationError(f"expected a non-empty 1-D turnover series, got shape {t.shape}")
    if not np.isfinite(t).all() or t.min() < 0.0:
        raise ValidationError("turnover must be non-negative and finite")
    return float(t.mean()) * TRADING_DAYS_PER_YEAR


def summarize(daily_returns, daily_turnover=None, rf=0.0) -> PerformanceSummary:
    """Full headline table for one run.

    Raises :class:`UndefinedMetricError` when the Sharpe ratio does not
    exist (zero-volatility excess returns); the granular metric functions
    stay usable for the parts that are defined.
    """
    r = _as_returns(daily_returns)
    if len(r) < 2:
        raise InsufficientHistoryError("summary needs at least 2 daily returns")
    sortino = sortino_ratio(r, rf)
    turnover = (
        np.zeros_like(r) if daily_turnover is None else np.asarray(daily_turnover, dtype=float)
    )
    # drawdown is measured from initial wealth onward, so a decline on the
    # very first day counts against the running peak
    nav = np.concatenate([[1.0], nav_from_returns(r)])
    return PerformanceSummary(
        ann_return=annualized_return(r),
        ann_vol=annualized_vol(r),
        sharpe=sharpe_ratio(r, rf),
        sortino=sortino,
        sortino_infinite=math.isinf(sortino),
        max_drawdown=max_drawdown(nav),
        ann_turnover=annualized_turnover(turnover),
    )
