"""Seeded synthetic market fixtures.

Real vendor data cannot ship with the repository, so every command and
test runs on synthetic panels: geometric random walks with optional
planted per-ticker drift and planted sentiment. Generation is fully
determined by the seed, which makes fixtures reproducible byte for byte.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .market_data import (
    Bar,
    FactorRow,
    PanelStore,
    SentimentRecord,
    panel_from_bars,
)


def trading_calendar(start: dt.date, n_days: int) -> list[dt.date]:
    """``n_days`` consecutive weekdays starting at or after ``start``."""
    days: list[dt.date] = []
    day = start
    while len(days) < n_days:
        if day.weekday() < 5:
            days.append(day)
        day += dt.timedelta(days=1)
    return days


@dataclass(frozen=True)
class MarketSpec:
    """Knobs for one synthetic market draw.

    ``drift`` maps ticker -> daily log drift (e.g. 0.002 for +20 bp/day);
    ``planted_sentiment`` maps ticker -> (label, confidence) emitted every
    day. Remaining tickers get sporadic random sentiment with probability
    ``sentiment_rate`` per day.
    """

    tickers: tuple[str, ...] = ("ALFA", "BRAV", "CHAR", "DELT", "ECHO", "FOXT")
    n_days: int = 150
    start: dt.date = dt.date(2022, 1, 3)
    daily_vol: float = 0.01
    drift: dict = field(default_factory=dict)
    planted_sentiment: dict = field(default_factory=dict)
    sentiment_rate: float = 0.3
    base_price: float = 100.0
    base_volume: float = 1.0e6


def make_bars(spec: MarketSpec, seed: int) -> list[Bar]:
    """Draw one market path; bar invariants hold by construction."""
    rng = np.random.default_rng(seed)
    days = trading_calendar(spec.start, spec.n_days)
    bars: list[Bar] = []
    for ticker in spec.tickers:
        mu = float(spec.drift.get(ticker, 0.0))
        sigma = spec.daily_vol
        shocks = rng.normal(mu, sigma, spec.n_days)
        log_close = np.log(spec.base_price) + np.cumsum(shocks)
        close = np.exp(log_close)
        prev_close = np.concatenate(([spec.base_price], close[:-1]))
        open_ = prev_close * np.exp(rng.normal(0.0, 0.25 * sigma, spec.n_days))
        hi_pad = np.abs(rng.normal(0.0, 0.5 * sigma, spec.n_days))
        lo_pad = np.abs(rng.normal(0.0, 0.5 * sigma, spec.n_days))
        high = np.maximum(open_, close) * np.exp(hi_pad)
        low = np.minimum(open_, close) * np.exp(-lo_pad)
        volume = spec.base_volume * np.exp(rng.normal(0.0, 0.3, spec.n_days))
        vwap = (open_ + high + low + close) / 4.0
        for i, day in enumerate(days):
            bar = Bar(
                day,
                ticker,
                float(open_[i]),
                float(high[i]),
                float(low[i]),
                float(close[i]),
                float(volume[i]),
                float(vwap[i]),
            )
            bar.validate()
            bars.append(bar)
    return bars


def make_sentiment(spec: MarketSpec, seed: int) -> list[SentimentRecord]:
    """Planted persistent sentiment plus sporadic random records."""
    rng = np.random.default_rng(seed + 1)
    days = trading_calendar(spec.start, spec.n_days)
    labels = ("Positive", "Neutral", "Negative")
    records: list[SentimentRecord] = []
    for ticker in spec.tickers:
        planted = spec.planted_sentiment.get(ticker)
        for day in days:
            if planted is not None:
                label, conf = planted
                records.append(SentimentRecord(day, ticker, label, float(conf)))
            elif rng.random() < spec.sentiment_rate:
                label = labels[int(rng.integers(0, 3))]
                conf = round(float(rng.uniform(0.2, 1.0)), 4)
                records.append(SentimentRecord(day, ticker, label, conf))
    return records


def make_factors(spec: MarketSpec, seed: int) -> list[FactorRow]:
    """Small random factor returns on the same calendar, rf held constant."""
    rng = np.random.default_rng(seed + 2)
    rows = []
    for day in trading_calendar(spec.start, spec.n_days):
        mktrf = float(rng.normal(3.0e-4, 0.01))
        others = rng.normal(0.0, 0.004, 5)
        rows.append(FactorRow(day, mktrf, *(float(x) for x in others), 1.0e-4))
    return rows


def make_panel(spec: MarketSpec, seed: int) -> PanelStore:
    """In-memory panel with sentiment attached (same path as the loaders)."""
    panel = panel_from_bars(make_bars(spec, seed))
    records = {(r.ticker, r.date): r for r in make_sentiment(spec, seed)}
    return panel.with_sentiment(records, 0)


# -- CSV writers -----------------------------------------------------------


def _writer(handle):
    return csv.writer(handle, lineterminator="\n")


def write_market(outdir: str | Path, spec: MarketSpec, seed: int) -> dict[str, Path]:
    """Write prices/sentiment/factors CSVs for ``spec`` under ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "prices": outdir / "prices.csv",
        "sentiment": outdir / "sentiment.csv",
        "factors": outdir / "factors.csv",
    }
    with open(paths["prices"], "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["date", "ticker", "open", "high", "low", "close", "volume", "vwap"])
        for bar in make_bars(spec, seed):
            w.writerow(
                [
                    bar.date.isoformat(),
                    bar.ticker,
                    repr(bar.open),
                    repr(bar.high),
                    repr(bar.low),
                    repr(bar.close),
                    repr(bar.volume),
                    repr(bar.vwap),
                ]
            )
    with open(paths["sentiment"], "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["date", "ticker", "label", "confidence"])
        for rec in make_sentiment(spec, seed):
            w.writerow([rec.date.isoformat(), rec.ticker, rec.label, repr(rec.confidence)])
    with open(paths["factors"], "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["date", "mktrf", "smb", "hml", "rmw", "cma", "umd", "rf"])
        for row in make_factors(spec, seed):
            w.writerow(
                [row.date.isoformat()]
                + [repr(getattr(row, name)) for name in ("mktrf", "smb", "hml", "rmw", "cma", "umd", "rf")]
            )
    return paths
