"""Loading, validation, and alignment of daily market data files.

Prices, sentiment, and factor returns arrive as plain CSV and become
immutable panels keyed by (ticker, trading day). Corporate-action
adjustment is the upstream producer's job: prices here must already be
adjusted, and sentiment must only contain news available before the
close of its trading day. This module validates; it does not repair.

CSV schemas (UTF-8, comma separated, ISO dates):

    prices:    date,ticker,open,high,low,close,volume,vwap
    sentiment: date,ticker,label,confidence     (label: Positive|Neutral|Negative)
    factors:   date,mktrf,smb,hml,rmw,cma,umd,rf[,percent]

If the factor header carries the optional trailing ``percent`` column,
all factor values are read as percentages and stored as decimals.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
from dataclasses import dataclass, field, replace
from functools import cached_property
from os import PathLike
from typing import Iterable, Mapping

import numpy as np

from .errors import ParseError, ValidationError

PRICE_HEADER = ("date", "ticker", "open", "high", "low", "close", "volume", "vwap")
SENTIMENT_HEADER = ("date", "ticker", "label", "confidence")
FACTOR_HEADER = ("date", "mktrf", "smb", "hml", "rmw", "cma", "umd", "rf")
FACTOR_NAMES = FACTOR_HEADER[1:]

#: Signed direction attached to each sentiment label.
SENTIMENT_SIGN = {"Positive": 1.0, "Neutral": 0.0, "Negative": -1.0}

_PRICE_FIELDS = ("open", "high", "low", "close", "volume", "vwap")


@dataclass(frozen=True)
class Bar:
    """One asset-day of adjusted OHLCV plus VWAP."""

    date: dt.date
    ticker: str
    open: float
    high: float
    low: float
    close: float
    volume: float
    vwap: float

    def validate(self) -> None:
        prices = (self.open, self.high, self.low, self.close, self.vwap)
        if not all(np.isfinite(p) and p > 0 for p in prices):
            raise ValidationError(
                f"{self.ticker} {self.date}: prices must be positive and finite"
            )
        if not (np.isfinite(self.volume) and self.volume >= 0):
            raise ValidationError(f"{self.ticker} {self.date}: volume must be >= 0")
        if self.high < self.low:
            raise ValidationError(
                f"{self.ticker} {self.date}: high {self.high} below low {self.low}"
            )
        if self.high < max(self.open, self.close):
            raise ValidationError(f"{self.ticker} {self.date}: high below open/close")
        if self.low > min(self.open, self.close):
            raise ValidationError(f"{self.ticker} {self.date}: low above open/close")


@dataclass(frozen=True)
class SentimentRecord:
    """Daily aggregated news sentiment for one ticker."""

    date: dt.date
    ticker: str
    label: str
    confidence: float

    def validate(self) -> None:
        if self.label not in SENTIMENT_SIGN:
            raise ValidationError(
                f"{self.ticker} {self.date}: unknown sentiment label {self.label!r}"
            )
        if not (np.isfinite(self.confidence) and 0.0 <= self.confidence <= 1.0):
            raise ValidationError(
                f"{self.ticker} {self.date}: confidence {self.confidence} outside [0, 1]"
            )

    @property
    def score(self) -> float:
        """Signed sentiment value: confidence times label direction."""
        return SENTIMENT_SIGN[self.label] * self.confidence


@dataclass(frozen=True)
class FactorRow:
    """One day of factor returns (decimals) plus the risk-free rate."""

    date: dt.date
    mktrf: float
    smb: float
    hml: float
    rmw: float
    cma: float
    umd: float
    rf: float


@dataclass(frozen=True)
class RejectedTicker:
    """A ticker excluded from the panel for not spanning the calendar."""

    ticker: str
    days_present: int
    days_expected: int


@dataclass(frozen=True)
class PanelStore:
    """Dense (trading day x ticker) market panel plus sparse sentiment.

    Arrays are laid out (n_days, n_tickers) and frozen read-only after
    construction. Sentiment is a sparse mapping; missing entries read as
    Neutral with zero confidence.
    """

    tickers: tuple[str, ...]
    dates: tuple[dt.date, ...]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    vwap: np.ndarray
    sentiment: Mapping[tuple[str, dt.date], SentimentRecord] = field(default_factory=dict)
    rejected_tickers: tuple[RejectedTicker, ...] = ()
    sentiment_dropped: int = 0

    def __post_init__(self):
        shape = (len(self.dates), len(self.tickers))
        for name in _PRICE_FIELDS:
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValidationError(f"panel array {name} has shape {arr.shape}, want {shape}")
            arr.setflags(write=False)
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError("panel calendar must be strictly increasing")

    # -- indexing ----------------------------------------------------------

    @cached_property
    def date_index(self) -> dict[dt.date, int]:
        return {d: i for i, d in enumerate(self.dates)}

    @cached_property
    def ticker_index(self) -> dict[str, int]:
        return {t: j for j, t in enumerate(self.tickers)}

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_tickers(self) -> int:
        return len(self.tickers)

    @property
    def n_bars(self) -> int:
        return self.n_days * self.n_tickers

    def bar(self, ticker: str, date: dt.date) -> Bar:
        i = self.date_index[date]
        j = self.ticker_index[ticker]
        return Bar(
            date,
            ticker,
            *(float(getattr(self, name)[i, j]) for name in _PRICE_FIELDS),
        )

    # -- sentiment ---------------------------------------------------------

    def sentiment_score(self, ticker: str, date: dt.date) -> float:
        """Signed sentiment for (ticker, date); 0.0 when no record exists."""
        rec = self.sentiment.get((ticker, date))
        return 0.0 if rec is None else rec.score

    def sentiment_grid(self) -> np.ndarray:
        """Dense (n_days, n_tickers) array of signed sentiment scores."""
        grid = np.zeros((self.n_days, self.n_tickers))
        for (ticker, date), rec in self.sentiment.items():
            grid[self.date_index[date], self.ticker_index[ticker]] = rec.score
        grid.setflags(write=False)
        return grid

    def with_sentiment(
        self, records: Mapping[tuple[str, dt.date], SentimentRecord], dropped: int
    ) -> "PanelStore":
        """Return a copy of this panel carrying the given sentiment map."""
        return replace(self, sentiment=dict(records), sentiment_dropped=dropped)

    # -- provenance --------------------------------------------------------

    def fingerprint(self) -> str:
        """SHA-256 over a canonical serialization of the panel contents."""
        h = hashlib.sha256()
        h.update(b"sigblend-panel-v1\n")
        h.update((",".join(self.tickers) + "\n").encode())
        for i, day in enumerate(self.dates):
            for j, ticker in enumerate(self.tickers):
                cells = ",".join(repr(float(getattr(self, f)[i, j])) for f in _PRICE_FIELDS)
                h.update(f"{day},{ticker},{cells}\n".encode())
        for (ticker, day), rec in sorted(self.sentiment.items()):
            h.update(f"{day},{ticker},{rec.label},{repr(float(rec.confidence))}\n".encode())
        return h.hexdigest()


def panel_from_bars(bars: Iterable[Bar]) -> PanelStore:
    """Assemble a dense panel from validated bars.

    The calendar is the union of all dates seen. Tickers with exactly one
    bar on every calendar day are retained (sorted lexicographically);
    the rest are excluded and reported via ``rejected_tickers``.
    """
    by_ticker: dict[str, dict[dt.date, Bar]] = {}
    for bar in bars:
        slot = by_ticker.setdefault(bar.ticker, {})
        if bar.date in slot:
            raise ValidationError(f"duplicate bar for {bar.ticker} on {bar.date}")
        slot[bar.date] = bar
    if not by_ticker:
        raise ValidationError("no bars provided")

    calendar = sorted({d for slots in by_ticker.values() for d in slots})
    retained: list[str] = []
    rejected: list[RejectedTicker] = []
    for ticker in sorted(by_ticker):
        have = len(by_ticker[ticker])
        if have == len(calendar):
            retained.append(ticker)
        else:
            rejected.append(RejectedTicker(ticker, have, len(calendar)))
    if not retained:
        raise ValidationError("every ticker has calendar gaps; no dense panel possible")

    arrays = {name: np.empty((len(calendar), len(retained))) for name in _PRICE_FIELDS}
    for j, ticker in enumerate(retained):
        column = by_ticker[ticker]
        for i, day in enumerate(calendar):
            bar = column[day]
            for name in _PRICE_FIELDS:
                arrays[name][i, j] = getattr(bar, name)
    return PanelStore(
        tickers=tuple(retained),
        dates=tuple(calendar),
        rejected_tickers=tuple(rejected),
        **arrays,
    )


# -- CSV loaders -----------------------------------------------------------


def _read_header(reader, path) -> tuple[str, ...]:
    header = next(reader, None)
    if header is None:
        raise ParseError(f"{path}:1: empty file")
    return tuple(cell.strip() for cell in header)


def _parse_date(cell: str, path, line_no: int) -> dt.date:
    try:
        return dt.date.fromisoformat(cell.strip())
    except ValueError:
        raise ParseError(f"{path}:{line_no}: bad date {cell!r}") from None


def _parse_float(cell: str, path, line_no: int, name: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"{path}:{line_no}: bad {name} value {cell!r}") from None


def load_prices(path: str | PathLike) -> PanelStore:
    """Parse and validate a prices CSV into a dense :class:`PanelStore`."""
    bars: list[Bar] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = _read_header(reader, path)
        if header != PRICE_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(PRICE_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PRICE_HEADER):
                raise ParseError(
                    f"{path}:{line_no}: expected {len(PRICE_HEADER)} fields, got {len(row)}"
                )
            date = _parse_date(row[0], path, line_no)
            ticker = row[1].strip()
            if not ticker:
                raise ParseError(f"{path}:{line_no}: empty ticker")
            values = [
                _parse_float(cell, path, line_no, name)
                for name, cell in zip(_PRICE_FIELDS, row[2:])
            ]
            bar = Bar(date, ticker, *values)
            try:
                bar.validate()
            except ValidationError as exc:
                raise ValidationError(f"{path}:{line_no}: {exc}") from None
            bars.append(bar)
    if not bars:
        raise ParseError(f"{path}: no data rows")
    return panel_from_bars(bars)


def load_sentiment(path: str | PathLike, panel: PanelStore) -> PanelStore:
    """Attach sentiment records to ``panel``, returning a new panel.

    Records for (ticker, date) pairs outside the panel are dropped and
    counted in ``sentiment_dropped``; at most one record may exist per
    retained (ticker, date).
    """
    records: dict[tuple[str, dt.date], SentimentRecord] = {}
    dropped = 0
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = _read_header(reader, path)
        if header != SENTIMENT_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(SENTIMENT_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SENTIMENT_HEADER):
                raise ParseError(
                    f"{path}:{line_no}: expected {len(SENTIMENT_HEADER)} fields, got {len(row)}"
                )
            date = _parse_date(row[0], path, line_no)
            ticker = row[1].strip()
            confidence = _parse_float(row[3], path, line_no, "confidence")
            rec = SentimentRecord(date, ticker, row[2].strip(), confidence)
            try:
                rec.validate()
            except ValidationError as exc:
                raise ValidationError(f"{path}:{line_no}: {exc}") from None
            if ticker not in panel.ticker_index or date not in panel.date_index:
                dropped += 1
                continue
            key = (ticker, date)
            if key in records:
                raise ValidationError(
                    f"{path}:{line_no}: duplicate sentiment for {ticker} on {date}"
                )
            records[key] = rec
    return panel.with_sentiment(records, dropped)


def load_factors(path: str | PathLike) -> list[FactorRow]:
    """Load daily factor returns, sorted by date, converted to decimals."""
    rows: list[FactorRow] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = _read_header(reader, path)
        if header == FACTOR_HEADER:
            scale = 1.0
        elif header == FACTOR_HEADER + ("percent",):
            scale = 0.01
        else:
            raise ParseError(
                f"{path}:1: expected header {','.join(FACTOR_HEADER)} (optionally + percent)"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                )
            date = _parse_date(row[0], path, line_no)
            values = [
                scale * _parse_float(cell, path, line_no, name)
                for name, cell in zip(FACTOR_NAMES, row[1:8])
            ]
            rows.append(FactorRow(date, *values))
    rows.sort(key=lambda r: r.date)
    for a, b in zip(rows, rows[1:]):
        if a.date == b.date:
            raise ValidationError(f"{path}: duplicate factor date {b.date}")
    return rows
