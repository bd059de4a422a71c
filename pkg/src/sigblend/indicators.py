"""Per-asset technical features from daily price/volume panels.

Every value reported for day t is a trailing computation over data up to
and including day t (the lagged return uses data only up to t-1), so
truncating a panel after day t never changes anything at or before t.
Warm-up entries are NaN in the single-series ops; panel-level feature
building drops the common warm-up prefix instead of imputing.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InsufficientHistoryError, ValidationError
from .market_data import PanelStore

#: Calendar days consumed before the first feature row: the 26-day EMA
#: plus its 9-day signal EMA need 35 observations to mature.
WARMUP_DAYS = 35

FEATURE_NAMES = (
    "lag_return",
    "rsi14",
    "macd_line",
    "macd_signal",
    "vwap_gap",
    "volume_pressure",
    "rv_ratio",
    "gk_vol",
)

_GK_COEF = 2.0 * np.log(2.0) - 1.0


def _as_series(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"expected a 1-D series, got shape {arr.shape}")
    return arr


def rsi14(closes, period: int = 14) -> np.ndarray:
    """Wilder-smoothed relative strength index.

    The first ``period`` entries are NaN. Days where both the smoothed
    average gain and loss are zero (flat prices) report the neutral
    value 50; zero average loss with positive gains reports 100.
    """
    closes = _as_series(closes)
    n = len(closes)
    if n < period + 1:
        raise InsufficientHistoryError(f"rsi needs at least {period + 1} closes, got {n}")
    delta = np.diff(closes)
    gains = np.maximum(delta, 0.0)
    losses = np.maximum(-delta, 0.0)
    out = np.full(n, np.nan)
    avg_gain = gains[:period].mean()
    avg_loss = losses[:period].mean()
    out[period] = _rsi_value(avg_gain, avg_loss)
    for t in range(period + 1, n):
        avg_gain = (avg_gain * (period - 1) + gains[t - 1]) / period
        avg_loss = (avg_loss * (period - 1) + losses[t - 1]) / period
        out[t] = _rsi_value(avg_gain, avg_loss)
    return out


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0:
        return 50.0 if avg_gain == 0.0 else 100.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


def ema(series, span: int) -> np.ndarray:
    """Exponential moving average seeded with the first observation."""
    series = _as_series(series)
    if len(series) == 0:
        raise InsufficientHistoryError("ema needs a non-empty series")
    if span < 1:
        raise ValidationError(f"ema span must be >= 1, got {span}")
    alpha = 2.0 / (span + 1.0)
    out = np.empty_like(series)
    out[0] = series[0]
    for t in range(1, len(series)):
        out[t] = alpha * series[t] + (1.0 - alpha) * out[t - 1]
    return out


def macd(closes, fast: int = 12, slow: int = 26, signal: int = 9):
    """MACD line (fast EMA minus slow EMA) and its signal-line EMA."""
    closes = _as_series(closes)
    if len(closes) < slow + signal:
        raise InsufficientHistoryError(
            f"macd needs at least {slow + signal} closes, got {len(closes)}"
        )
    line = ema(closes, fast) - ema(closes, slow)
    return line, ema(line, signal)


def garman_klass(open_, high, low, close):
    """Per-bar Garman-Klass variance estimate, clamped below at zero.

    Accepts scalars or same-shape arrays; all prices must be positive.
    The clamp removes the rare negative estimates the raw formula can
    produce when the close-to-open move dominates the day's range.
    """
    o, h, l, c = (np.asarray(x, dtype=float) for x in (open_, high, low, close))
    if min(o.min(), h.min(), l.min(), c.min()) <= 0:
        raise ValidationError("garman_klass needs positive prices")
    raw = 0.5 * np.log(h / l) ** 2 - _GK_COEF * np.log(c / o) ** 2
    clamped = np.maximum(raw, 0.0)
    return float(clamped) if clamped.ndim == 0 else clamped


def rolling_stats(series, window: int):
    """Trailing mean and population standard deviation.

    Entries before the window fills are NaN; NaNs inside the input
    propagate. Windows of size 1 are rejected (the std is degenerate).
    """
    series = _as_series(series)
    if window < 2:
        raise ValidationError(f"rolling window must be >= 2, got {window}")
    if window > len(series):
        raise InsufficientHistoryError(
            f"rolling window {window} exceeds series length {len(series)}"
        )
    views = np.lib.stride_tricks.sliding_window_view(series, window)
    mean = np.full(len(series), np.nan)
    std = np.full(len(series), np.nan)
    mean[window - 1 :] = views.mean(axis=1)
    std[window - 1 :] = views.std(axis=1)
    return mean, std


@dataclass(frozen=True)
class FeatureVector:
    """All per-asset features for one (ticker, day)."""

    lag_return: float
    rsi14: float
    macd: float
    vwap_gap: float
    volume_pressure: float
    rv_ratio: float
    gk_vol: float


@dataclass(frozen=True)
class FeaturePanel:
    """Dense post-warm-up feature grids aligned to a source panel.

    Both MACD lines are kept: the raw line feeds the rule-based technical
    signal, the signal line feeds the RL state. ``offset`` is the index
    of ``dates[0]`` within the source panel's calendar.
    """

    tickers: tuple[str, ...]
    dates: tuple[dt.date, ...]
    offset: int
    lag_return: np.ndarray
    rsi14: np.ndarray
    macd_line: np.ndarray
    macd_signal: np.ndarray
    vwap_gap: np.ndarray
    volume_pressure: np.ndarray
    rv_ratio: np.ndarray
    gk_vol: np.ndarray

    def __post_init__(self):
        shape = (len(self.dates), len(self.tickers))
        for name in FEATURE_NAMES:
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValidationError(f"feature {name} has shape {arr.shape}, want {shape}")
            arr.setflags(write=False)

    @cached_property
    def date_index(self) -> dict[dt.date, int]:
        return {d: i for i, d in enumerate(self.dates)}

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def vector(self, ticker: str, date: dt.date, macd_kind: str = "line") -> FeatureVector:
        """Features for one (ticker, day); pick which MACD flavor to report."""
        if macd_kind not in ("line", "signal"):
            raise ValidationError(f"macd_kind must be 'line' or 'signal', got {macd_kind!r}")
        i = self.date_index[date]
        j = self.tickers.index(ticker)
        macd_arr = self.macd_line if macd_kind == "line" else self.macd_signal
        return FeatureVector(
            lag_return=float(self.lag_return[i, j]),
            rsi14=float(self.rsi14[i, j]),
            macd=float(macd_arr[i, j]),
            vwap_gap=float(self.vwap_gap[i, j]),
            volume_pressure=float(self.volume_pressure[i, j]),
            rv_ratio=float(self.rv_ratio[i, j]),
            gk_vol=float(self.gk_vol[i, j]),
        )


def _neutral_ratio(values: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    """values/baseline with the 0/0 case mapped to the neutral ratio 1.

    Baselines are trailing means that include the current observation, so
    a zero baseline implies a zero numerator (degenerate flat stretch).
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = values / baseline
    return np.where(baseline == 0.0, 1.0, ratio)


def build_features(panel: PanelStore, warmup: int = WARMUP_DAYS) -> FeaturePanel:
    """Compute the full feature grid for a panel, dropping the warm-up.

    Per ticker and day t: previous day's log return, Wilder RSI(14),
    MACD(12, 26) line and 9-day signal line, VWAP/close - 1, volume over
    its trailing 20-day mean, 5-day realized volatility of log returns
    over its trailing 20-day mean, and the square root of the 20-day mean
    Garman-Klass variance.
    """
    n, k = panel.n_days, panel.n_tickers
    if n <= warmup:
        raise InsufficientHistoryError(
            f"panel has {n} days; need more than the {warmup}-day warm-up"
        )
    full = {name: np.full((n, k), np.nan) for name in FEATURE_NAMES}
    for j in range(k):
        closes = panel.close[:, j]
        log_ret = np.full(n, np.nan)
        log_ret[1:] = np.log(closes[1:] / closes[:-1])
        full["lag_return"][1:, j] = log_ret[:-1]
        full["rsi14"][:, j] = rsi14(closes)
        line, sig = macd(closes)
        full["macd_line"][:, j] = line
        full["macd_signal"][:, j] = sig
        full["vwap_gap"][:, j] = panel.vwap[:, j] / closes - 1.0
        vol_ma, _ = rolling_stats(panel.volume[:, j], 20)
        full["volume_pressure"][:, j] = _neutral_ratio(panel.volume[:, j], vol_ma)
        _, rv = rolling_stats(log_ret, 5)
        rv_ma, _ = rolling_stats(rv, 20)
        full["rv_ratio"][:, j] = _neutral_ratio(rv, rv_ma)
        gk = garman_klass(panel.open[:, j], panel.high[:, j], panel.low[:, j], closes)
        gk_ma, _ = rolling_stats(gk, 20)
        full["gk_vol"][:, j] = np.sqrt(gk_ma)

    sliced = {name: np.ascontiguousarray(arr[warmup:]) for name, arr in full.items()}
    for name, arr in sliced.items():
        if not np.isfinite(arr).all():
            i, j = np.argwhere(~np.isfinite(arr))[0]
            raise ValidationError(
                f"non-finite {name} for {panel.tickers[j]} on {panel.dates[warmup + i]}"
            )
    return FeaturePanel(
        tickers=panel.tickers,
        dates=panel.dates[warmup:],
        offset=warmup,
        **sliced,
    )
