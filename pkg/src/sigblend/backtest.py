"""Daily-rebalanced portfolio backtests from signal frames.

Execution model: trades fill at the same day's close, so weights chosen
on day t earn the close-to-close return into day t+1. Turnover at a
rebalance is the one-sided sum |w_new - w_drifted| against the previous
weights drifted by realized returns (a full flip from one asset to
another costs 2.0). Transaction costs are turnover times the per-unit
rate; borrow costs accrue on short gross notional per day held.

Two strategies share the machinery:

* long-short: +1/k on each top-quintile name, -1/m on each bottom name
  (unit gross capital per leg, zero net); the NAV compounds the daily
  long-minus-short return on one unit of capital.
* long-only: 1/k on each top-quintile name with an explicit cash slot;
  the value series starts at ``initial_capital``.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PortfolioConstructionError, ValidationError
from .market_data import PanelStore
from .metrics import PerformanceSummary, summarize
from .signals import SignalFrame

CASH_LABEL = "CASH"


@dataclass(frozen=True)
class CostModel:
    """Linear trading frictions in basis points."""

    tcost_bps: float = 0.0
    borrow_bps: float = 0.0

    def __post_init__(self):
        if self.tcost_bps < 0 or self.borrow_bps < 0:
            raise ValidationError("cost rates must be non-negative")

    @property
    def tcost(self) -> float:
        return self.tcost_bps / 1.0e4

    @property
    def borrow(self) -> float:
        return self.borrow_bps / 1.0e4


def drift_weights(weights, returns, renormalize: bool) -> np.ndarray:
    """Weights after one holding period of per-slot returns.

    With ``renormalize`` the grown weights are rescaled by the portfolio
    growth factor (keeps simplex weights on the simplex); without it each
    position grows independently, which is the convention for the
    zero-net long-short book where no total defines a denominator.
    """
    weights = np.asarray(weights, dtype=float)
    returns = np.asarray(returns, dtype=float)
    if weights.shape != returns.shape:
        raise ValidationError(f"weights shape {weights.shape} vs returns {returns.shape}")
    grown = weights * (1.0 + returns)
    if not renormalize:
        return grown
    total = grown.sum()
    if total <= 0.0:
        raise ValidationError("portfolio value went non-positive during drift")
    return grown / total


def turnover(new_weights, prev_weights, prev_returns=None, renormalize: bool = True) -> float:
    """One-sided traded weight: sum |w_new - w_prev_drifted|.

    ``prev_returns`` are the per-slot returns realized while holding
    ``prev_weights``; omit them for a zero-return period. The sum is not
    halved: a full flip from one asset to another counts 2.0.
    """
    new_weights = np.asarray(new_weights, dtype=float)
    prev_weights = np.asarray(prev_weights, dtype=float)
    if new_weights.shape != prev_weights.shape:
        raise ValidationError(
            f"weight shapes differ: {new_weights.shape} vs {prev_weights.shape}"
        )
    if prev_returns is None:
        drifted = prev_weights
    else:
        drifted = drift_weights(prev_weights, prev_returns, renormalize)
    return float(np.abs(new_weights - drifted).sum())


@dataclass
class BacktestReport:
    """Aligned daily ledger of one strategy run.

    Row i: weights chosen at the close of ``trade_dates[i]`` earn
    ``daily_return[i]`` (net of that day's costs) into ``dates[i]``, the
    day the NAV entry is struck. ``turnover`` and ``costs_paid`` are
    booked on the trade date; costs are per unit of capital.
    """

    kind: str
    tickers: tuple[str, ...]
    weight_labels: tuple[str, ...]
    trade_dates: tuple[dt.date, ...]
    dates: tuple[dt.date, ...]
    weights: np.ndarray
    daily_return: np.ndarray
    nav: np.ndarray
    turnover: np.ndarray
    costs_paid: np.ndarray
    initial_value: float = 1.0

    def __post_init__(self):
        n = len(self.dates)
        if not (
            len(self.trade_dates) == n
            and self.weights.shape == (n, len(self.weight_labels))
            and self.daily_return.shape == (n,)
            and self.nav.shape == (n,)
            and self.turnover.shape == (n,)
            and self.costs_paid.shape == (n,)
        ):
            raise ValidationError("report columns are not aligned")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def summary(self, rf=0.0) -> PerformanceSummary:
        return summarize(self.daily_return, self.turnover, rf)

    def write(self, outdir: str | Path) -> None:
        """Write nav/weights/costs CSVs plus a summary JSON."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "nav.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "nav", "daily_return"])
            for i, day in enumerate(self.dates):
                w.writerow(
                    [day.isoformat(), repr(float(self.nav[i])), repr(float(self.daily_return[i]))]
                )
        with open(outdir / "weights.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date"] + list(self.weight_labels))
            for i, day in enumerate(self.trade_dates):
                w.writerow([day.isoformat()] + [repr(float(x)) for x in self.weights[i]])
        with open(outdir / "costs.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "turnover", "cost_paid"])
            for i, day in enumerate(self.trade_dates):
                w.writerow(
                    [
                        day.isoformat(),
                        repr(float(self.turnover[i])),
                        repr(float(self.costs_paid[i])),
                    ]
                )
        summary = {
            "kind": self.kind,
            "initial_value": self.initial_value,
            "days": self.n_days,
            "first_trade_date": self.trade_dates[0].isoformat(),
            "last_date": self.dates[-1].isoformat(),
            "final_nav": float(self.nav[-1]),
            "metrics": self.summary().to_dict(),
        }
        with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_report_returns(outdir: str | Path) -> tuple[list[dt.date], np.ndarray]:
    """Read (dates, daily returns) back from a written report directory."""
    path = Path(outdir) / "nav.csv"
    if not path.exists():
        raise ValidationError(f"no report found at {path}")
    dates: list[dt.date] = []
    rets: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["date", "nav", "daily_return"]:
            raise ValidationError(f"{path}: not a nav.csv report file")
        for row in reader:
            dates.append(dt.date.fromisoformat(row[0]))
            rets.append(float(row[2]))
    if not dates:
        raise ValidationError(f"{path}: empty report")
    return dates, np.array(rets)


def _frame_day_index(panel: PanelStore, frame: SignalFrame) -> int:
    if frame.tickers != panel.tickers:
        raise ValidationError(f"signal frame tickers do not match panel on {frame.date}")
    return panel.date_index[frame.date]


def run_long_short(
    panel: PanelStore, frames: list[SignalFrame], cost: CostModel = CostModel()
) -> BacktestReport:
    """Equal-weight top-minus-bottom quintile book on unit gross per leg."""
    if not frames:
        raise ValidationError("no signal frames to trade")
    n_assets = panel.n_tickers
    prev_w = np.zeros(n_assets)
    prev_r = np.zeros(n_assets)
    nav = 1.0
    rows = []
    for frame in frames:
        t = _frame_day_index(panel, frame)
        if t + 1 >= panel.n_days:
            break  # the last calendar day has no next close to earn
        q_top = frame.quintile.max()
        top = frame.quintile == q_top
        bottom = frame.quintile == 0
        if not top.any() or not bottom.any():
            raise PortfolioConstructionError(f"empty quintile on {frame.date}")
        w = np.zeros(n_assets)
        w[top] = 1.0 / top.sum()
        w[bottom] = -1.0 / bottom.sum()
        to = turnover(w, prev_w, prev_r, renormalize=False)
        short_gross = float(np.abs(w[w < 0.0]).sum())
        cost_paid = cost.tcost * to + cost.borrow * short_gross
        r_next = panel.close[t + 1] / panel.close[t] - 1.0
        net = float(w @ r_next) - cost_paid
        nav *= 1.0 + net
        rows.append((frame.date, panel.dates[t + 1], w, net, nav, to, cost_paid))
        prev_w, prev_r = w, r_next
    if not rows:
        raise ValidationError("no tradable days: signals end on the last panel day")
    return _report_from_rows("long_short", panel.tickers, panel.tickers, rows, 1.0)


def run_long_only(
    panel: PanelStore,
    frames: list[SignalFrame],
    cost: CostModel = CostModel(),
    initial_capital: float = 1.0e6,
) -> BacktestReport:
    """Equal-weight top-quintile book, fully invested, with a cash slot."""
    if not frames:
        raise ValidationError("no signal frames to trade")
    if initial_capital <= 0:
        raise ValidationError("initial_capital must be positive")
    n_assets = panel.n_tickers
    labels = panel.tickers + (CASH_LABEL,)
    prev_w = np.zeros(n_assets + 1)
    prev_w[-1] = 1.0  # start in cash
    prev_r = np.zeros(n_assets + 1)
    value = initial_capital
    rows = []
    for frame in frames:
        t = _frame_day_index(panel, frame)
        if t + 1 >= panel.n_days:
            break
        top = frame.quintile == frame.quintile.max()
        if not top.any():
            raise PortfolioConstructionError(f"empty top quintile on {frame.date}")
        w = np.zeros(n_assets + 1)
        w[:-1][top] = 1.0 / top.sum()
        to = turnover(w, prev_w, prev_r, renormalize=True)
        cost_paid = cost.tcost * to
        r_next = np.zeros(n_assets + 1)
        r_next[:-1] = panel.close[t + 1] / panel.close[t] - 1.0
        net = float(w @ r_next) - cost_paid
        value *= 1.0 + net
        rows.append((frame.date, panel.dates[t + 1], w, net, value, to, cost_paid))
        prev_w, prev_r = w, r_next
    if not rows:
        raise ValidationError("no tradable days: signals end on the last panel day")
    return _report_from_rows("long_only", panel.tickers, labels, rows, initial_capital)


def _report_from_rows(kind, tickers, labels, rows, initial_value) -> BacktestReport:
    trade_dates, dates, weights, rets, navs, tos, costs = zip(*rows)
    return BacktestReport(
        kind=kind,
        tickers=tuple(tickers),
        weight_labels=tuple(labels),
        trade_dates=tuple(trade_dates),
        dates=tuple(dates),
        weights=np.array(weights),
        daily_return=np.array(rets),
        nav=np.array(navs),
        turnover=np.array(tos),
        costs_paid=np.array(costs),
        initial_value=float(initial_value),
    )
