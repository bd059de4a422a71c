"""Cross-sectional signal construction and quintile assignment.

For each trading day t the technical signal is yesterday's volume
pressure plus yesterday's MACD line; the sentiment signal is the signed,
confidence-weighted label for day t (missing records count as neutral).
Both are z-scored across the day's tickers and blended with a convex
weight, then ranked into quintiles (ascending; the top bucket holds the
strongest names).
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    DegenerateCrossSectionError,
    InsufficientHistoryError,
    PortfolioConstructionError,
    ValidationError,
)
from .indicators import FeaturePanel
from .market_data import PanelStore


@dataclass(frozen=True)
class CombinerConfig:
    """How the two z-scored signals are blended and bucketed.

    ``sentiment_weight`` is the weight on the sentiment z-score; the
    technical z-score gets the complement. 0 reproduces a technical-only
    strategy, 1 a sentiment-only one.
    """

    sentiment_weight: float = 0.5
    quintile_count: int = 5

    def __post_init__(self):
        if not 0.0 <= self.sentiment_weight <= 1.0:
            raise ValidationError(
                f"sentiment_weight must be in [0, 1], got {self.sentiment_weight}"
            )
        if self.quintile_count < 2:
            raise ValidationError(f"quintile_count must be >= 2, got {self.quintile_count}")


@dataclass(frozen=True)
class SignalFrame:
    """All per-ticker signal columns for one trading day."""

    date: dt.date
    tickers: tuple[str, ...]
    technical_raw: np.ndarray
    sentiment_raw: np.ndarray
    technical_z: np.ndarray
    sentiment_z: np.ndarray
    combined: np.ndarray
    quintile: np.ndarray


def technical_signal(features: FeaturePanel, date: dt.date) -> np.ndarray:
    """Yesterday's volume pressure plus yesterday's MACD line, per ticker."""
    i = features.date_index.get(date)
    if i is None:
        raise ValidationError(f"{date} is not a feature date")
    if i < 1:
        raise InsufficientHistoryError(
            f"technical signal for {date} needs features for the prior day"
        )
    return features.volume_pressure[i - 1] + features.macd_line[i - 1]


def sentiment_signal(panel: PanelStore, date: dt.date) -> np.ndarray:
    """Signed, confidence-weighted sentiment per ticker; missing -> 0."""
    if date not in panel.date_index:
        raise ValidationError(f"{date} is not a panel date")
    return np.array([panel.sentiment_score(t, date) for t in panel.tickers])


def cross_sectional_zscore(values) -> np.ndarray:
    """(x - mean) / population std across the cross-section.

    A zero-dispersion day (all values equal) maps to all zeros rather
    than dividing by zero; fewer than two assets is an error.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) < 2:
        raise DegenerateCrossSectionError(
            f"z-score needs at least 2 assets, got shape {values.shape}"
        )
    if not np.isfinite(values).all():
        raise ValidationError("z-score input contains non-finite values")
    std = values.std()
    if std == 0.0:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def combine(technical_z, sentiment_z, config: CombinerConfig) -> np.ndarray:
    """Convex blend of the two z-scored signals.

    At the endpoints the untouched input array is returned (copied), so a
    weight of exactly 0 or 1 is bit-identical to the single-signal path.
    """
    technical_z = np.asarray(technical_z, dtype=float)
    sentiment_z = np.asarray(sentiment_z, dtype=float)
    if technical_z.shape != sentiment_z.shape:
        raise AlignmentError(
            f"signal shapes differ: {technical_z.shape} vs {sentiment_z.shape}"
        )
    if config.sentiment_weight == 0.0:
        return technical_z.copy()
    if config.sentiment_weight == 1.0:
        return sentiment_z.copy()
    w_tech = 1.0 - config.sentiment_weight
    return w_tech * technical_z + config.sentiment_weight * sentiment_z


def assign_quintiles(values, tickers, q: int = 5) -> np.ndarray:
    """Ascending rank buckets: quintile = floor(q * rank / n).

    Ties break by ticker (lexicographic), making assignment deterministic
    and independent of input order. Bucket q-1 holds the strongest names.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n != len(tickers):
        raise AlignmentError(f"{n} values vs {len(tickers)} tickers")
    if n < q:
        raise PortfolioConstructionError(f"need at least {q} assets for {q} buckets, got {n}")
    order = sorted(range(n), key=lambda i: (values[i], tickers[i]))
    buckets = np.empty(n, dtype=int)
    for rank, i in enumerate(order):
        buckets[i] = (q * rank) // n
    return buckets


def build_signal_frame(
    panel: PanelStore, features: FeaturePanel, date: dt.date, config: CombinerConfig
) -> SignalFrame:
    """Assemble raw, z-scored, combined, and bucketed signals for one day."""
    technical_raw = technical_signal(features, date)
    sentiment_raw = sentiment_signal(panel, date)
    technical_z = cross_sectional_zscore(technical_raw)
    sentiment_z = cross_sectional_zscore(sentiment_raw)
    combined = combine(technical_z, sentiment_z, config)
    quintile = assign_quintiles(combined, panel.tickers, config.quintile_count)
    return SignalFrame(
        date=date,
        tickers=panel.tickers,
        technical_raw=technical_raw,
        sentiment_raw=sentiment_raw,
        technical_z=technical_z,
        sentiment_z=sentiment_z,
        combined=combined,
        quintile=quintile,
    )


def signal_dates(features: FeaturePanel) -> tuple[dt.date, ...]:
    """Days with a full signal: every feature day but the first."""
    return features.dates[1:]


def build_signal_frames(
    panel: PanelStore, features: FeaturePanel, config: CombinerConfig
) -> list[SignalFrame]:
    """Signal frames for every eligible day, oldest first."""
    return [build_signal_frame(panel, features, d, config) for d in signal_dates(features)]


def write_signal_frames(frames: list[SignalFrame], path: str | Path) -> None:
    """Dump signal frames as CSV for audit (one row per ticker-day)."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["date", "ticker", "technical_z", "sentiment_z", "combined", "quintile"])
        for frame in frames:
            for j, ticker in enumerate(frame.tickers):
                writer.writerow(
                    [
                        frame.date.isoformat(),
                        ticker,
                        repr(float(frame.technical_z[j])),
                        repr(float(frame.sentiment_z[j])),
                        repr(float(frame.combined[j])),
                        int(frame.quintile[j]),
                    ]
                )
