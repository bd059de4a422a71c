"""Long-only portfolio environment for the RL allocator.

The observation at day t concatenates the z-scored per-asset features
(eight per stock, stock-major) with the current portfolio weights
(n_stocks + 1 slots, cash last). Actions are unbounded logits projected
onto the simplex by a softmax, so every reachable allocation is long-only
and fully invested across stocks plus cash; cash earns zero.

Accounting: the environment's value index V compounds the gross
portfolio return, V_{t+1} = V_t * (1 + sum_i w_i r_i), and the reward
nets out frictions: reward_t = V_{t+1}/V_t - 1 - turnover_t * c_tcost -
short_exposure_t * c_borrow. Under softmax projection the short exposure
is identically zero, so the borrow term never bites; it is kept so the
reward ledger states the full cost model. Net performance series are
rebuilt from rewards by the evaluation layer.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .backtest import CASH_LABEL
from .errors import (
    EpisodeBoundsError,
    InsufficientHistoryError,
    ValidationError,
)
from .indicators import FeaturePanel
from .market_data import PanelStore

#: Per-asset state features, in order; sentiment is appended to the seven
#: price/volume features so news information reaches the policy directly.
ENV_FEATURES = (
    "lag_return",
    "rsi14",
    "macd_signal",
    "vwap_gap",
    "volume_pressure",
    "rv_ratio",
    "gk_vol",
    "sentiment",
)


@dataclass(frozen=True)
class EnvConfig:
    """Frictions and starting wealth for one environment instance."""

    tcost_bps: float = 10.0
    borrow_bps: float = 0.0
    initial_value: float = 1.0e6

    def __post_init__(self):
        if self.tcost_bps < 0 or self.borrow_bps < 0:
            raise ValidationError("cost rates must be non-negative")
        if self.initial_value <= 0:
            raise ValidationError("initial_value must be positive")

    @property
    def tcost(self) -> float:
        return self.tcost_bps / 1.0e4

    @property
    def borrow(self) -> float:
        return self.borrow_bps / 1.0e4


def feature_matrix(panel: PanelStore, features: FeaturePanel, date: dt.date) -> np.ndarray:
    """Raw (n_stocks, len(ENV_FEATURES)) state block for one day."""
    i = features.date_index.get(date)
    if i is None:
        raise ValidationError(f"{date} is not a feature date")
    sentiment = np.array([panel.sentiment_score(t, date) for t in panel.tickers])
    columns = [
        features.lag_return[i],
        features.rsi14[i],
        features.macd_signal[i],
        features.vwap_gap[i],
        features.volume_pressure[i],
        features.rv_ratio[i],
        features.gk_vol[i],
        sentiment,
    ]
    return np.column_stack(columns)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature z-scoring statistics, frozen at fit time.

    Fit on the training window only and reused verbatim for evaluation,
    so out-of-sample observations never leak into the normalization.
    Zero-dispersion features scale by 1 (they stay centered at zero).
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean.setflags(write=False)
        self.std.setflags(write=False)

    @classmethod
    def fit(
        cls,
        panel: PanelStore,
        features: FeaturePanel,
        start: dt.date,
        end: dt.date,
    ) -> "FeatureScaler":
        days = [d for d in features.dates if start <= d <= end]
        if not days:
            raise InsufficientHistoryError(f"no feature days between {start} and {end}")
        stacked = np.concatenate([feature_matrix(panel, features, d) for d in days], axis=0)
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        return cls(mean=mean, std=np.where(std == 0.0, 1.0, std))

    def transform(self, raw: np.ndarray) -> np.ndarray:
        if raw.shape[-1] != len(self.mean):
            raise ValidationError(f"feature block has {raw.shape[-1]} columns, want {len(self.mean)}")
        return (raw - self.mean) / self.std


def project_action(logits) -> np.ndarray:
    """Numerically stable softmax onto the allocation simplex."""
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 1 or len(logits) == 0:
        raise ValidationError(f"action logits must be a 1-D vector, got shape {logits.shape}")
    if not np.isfinite(logits).all():
        raise ValidationError("action logits contain non-finite values")
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


@dataclass
class StepResult:
    """Transition payload: next state, net reward, done flag, diagnostics."""

    state: np.ndarray
    reward: float
    done: bool
    info: dict


class PortfolioEnv:
    """Episode over a contiguous window of post-warm-up trading days.

    Decisions happen at the close of each day from ``start`` through the
    day before ``end``; each step consumes the close-to-close return into
    the next day. The episode is done when the valuation day is ``end``.
    """

    def __init__(
        self,
        panel: PanelStore,
        features: FeaturePanel,
        scaler: FeatureScaler,
        start: dt.date,
        end: dt.date,
        config: EnvConfig = EnvConfig(),
    ):
        if start not in features.date_index:
            if start in panel.date_index:
                raise InsufficientHistoryError(f"window start {start} falls inside the warm-up")
            raise ValidationError(f"window start {start} is not a panel date")
        if end not in features.date_index:
            raise ValidationError(f"window end {end} is not a post-warm-up panel date")
        if start >= end:
            raise ValidationError(f"window start {start} must precede end {end}")
        self.panel = panel
        self.features = features
        self.scaler = scaler
        self.config = config
        self.dates = tuple(d for d in features.dates if start <= d <= end)
        day_idx = [panel.date_index[d] for d in self.dates]
        closes = panel.close[day_idx]
        stock_returns = closes[1:] / closes[:-1] - 1.0
        # per-step returns with the zero-earning cash slot appended
        self._returns = np.hstack([stock_returns, np.zeros((len(stock_returns), 1))])
        self._scaled = np.stack(
            [scaler.transform(feature_matrix(panel, features, d)) for d in self.dates]
        )
        self.n_stocks = panel.n_tickers
        self._cursor: int | None = None
        self._weights = np.zeros(self.n_stocks + 1)
        self._value = config.initial_value

    @property
    def action_dim(self) -> int:
        return self.n_stocks + 1

    @property
    def state_dim(self) -> int:
        return self.n_stocks * len(ENV_FEATURES) + self.n_stocks + 1

    @property
    def n_steps(self) -> int:
        """Number of decisions in one episode."""
        return len(self.dates) - 1

    @property
    def weight_labels(self) -> tuple[str, ...]:
        return self.panel.tickers + (CASH_LABEL,)

    def _observe(self, i: int) -> np.ndarray:
        return np.concatenate([self._scaled[i].ravel(), self._weights])

    def reset(self) -> np.ndarray:
        """Start a fresh episode: all cash, initial value, first window day."""
        self._cursor = 0
        self._weights = np.zeros(self.n_stocks + 1)
        self._weights[-1] = 1.0
        self._value = self.config.initial_value
        return self._observe(0)

    def step(self, action_logits) -> StepResult:
        if self._cursor is None:
            raise EpisodeBoundsError("call reset() before step()")
        i = self._cursor
        if i >= self.n_steps:
            raise EpisodeBoundsError(f"episode already finished on {self.dates[-1]}")
        target = project_action(action_logits)
        if len(target) != self.action_dim:
            raise ValidationError(f"{len(target)} action logits for {self.action_dim} slots")
        turnover = float(np.abs(target - self._weights).sum())
        short_exposure = float(np.abs(target[target < 0.0]).sum())
        assert short_exposure == 0.0, "softmax projection produced a short position"
        r_full = self._returns[i]
        gross = float(target @ r_full)
        cost = turnover * self.config.tcost + short_exposure * self.config.borrow
        reward = gross - cost
        value_before = self._value
        self._value = value_before * (1.0 + gross)
        drifted = target * (1.0 + r_full)
        self._weights = drifted / drifted.sum()
        self._cursor = i + 1
        done = self._cursor >= self.n_steps
        info = {
            "date": self.dates[i],
            "next_date": self.dates[i + 1],
            "value": self._value,
            "gross_return": gross,
            "turnover": turnover,
            "cost": cost,
            "short_exposure": short_exposure,
            "weights": target,
            "drifted_weights": self._weights.copy(),
        }
        return StepResult(state=self._observe(self._cursor), reward=reward, done=done, info=info)
