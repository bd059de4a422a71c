"""Indicator tests against independent brute-force oracles.

The oracle implementations below are deliberately naive: plain-Python
loops transcribing the textbook recursions, sharing no code with the
package. Agreement is required to 1e-9.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sigblend.errors import InsufficientHistoryError, ValidationError
from sigblend.indicators import (
    WARMUP_DAYS,
    build_features,
    ema,
    garman_klass,
    macd,
    rolling_stats,
    rsi14,
)
from sigblend.synthetic import MarketSpec, make_panel

# -- oracles -----------------------------------------------------------------


def oracle_ema(xs, span):
    alpha = 2.0 / (span + 1.0)
    out = [xs[0]]
    for x in xs[1:]:
        out.append(alpha * x + (1.0 - alpha) * out[-1])
    return out


def oracle_rsi(closes, period=14):
    out = [float("nan")] * len(closes)
    gains, losses = [], []
    for prev, cur in zip(closes, closes[1:]):
        change = cur - prev
        gains.append(max(change, 0.0))
        losses.append(max(-change, 0.0))
    avg_gain = sum(gains[:period]) / period
    avg_loss = sum(losses[:period]) / period

    def value(g, l):
        if l == 0.0:
            return 50.0 if g == 0.0 else 100.0
        return 100.0 - 100.0 / (1.0 + g / l)

    out[period] = value(avg_gain, avg_loss)
    for t in range(period + 1, len(closes)):
        avg_gain = (avg_gain * (period - 1) + gains[t - 1]) / period
        avg_loss = (avg_loss * (period - 1) + losses[t - 1]) / period
        out[t] = value(avg_gain, avg_loss)
    return out


def oracle_macd(closes, fast=12, slow=26, signal=9):
    fast_e = oracle_ema(closes, fast)
    slow_e = oracle_ema(closes, slow)
    line = [f - s for f, s in zip(fast_e, slow_e)]
    return line, oracle_ema(line, signal)


def oracle_gk(o, h, l, c):
    raw = 0.5 * math.log(h / l) ** 2 - (2.0 * math.log(2.0) - 1.0) * math.log(c / o) ** 2
    return max(raw, 0.0)


def oracle_rolling(xs, window):
    means, stds = [], []
    for i in range(len(xs)):
        if i + 1 < window:
            means.append(float("nan"))
            stds.append(float("nan"))
            continue
        chunk = xs[i + 1 - window : i + 1]
        mu = sum(chunk) / window
        means.append(mu)
        stds.append(math.sqrt(sum((x - mu) ** 2 for x in chunk) / window))
    return means, stds


def random_walk(rng, n=80, vol=0.02):
    return list(100.0 * np.exp(np.cumsum(rng.normal(0.0, vol, n))))


# -- oracle agreement ---------------------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_rsi_matches_oracle(seed):
    closes = random_walk(np.random.default_rng(seed))
    got = rsi14(closes)
    want = oracle_rsi(closes)
    np.testing.assert_allclose(got[14:], want[14:], rtol=0, atol=1e-9)
    assert np.isnan(got[:14]).all()


@pytest.mark.parametrize("seed", range(10))
def test_ema_matches_oracle(seed):
    closes = random_walk(np.random.default_rng(seed))
    for span in (3, 9, 12, 26):
        np.testing.assert_allclose(ema(closes, span), oracle_ema(closes, span), atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_macd_matches_oracle(seed):
    closes = random_walk(np.random.default_rng(seed))
    line, sig = macd(closes)
    oline, osig = oracle_macd(closes)
    np.testing.assert_allclose(line, oline, atol=1e-9)
    np.testing.assert_allclose(sig, osig, atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_gk_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    c = np.asarray(random_walk(rng, 40))
    o = c * np.exp(rng.normal(0, 0.01, 40))
    h = np.maximum(o, c) * np.exp(np.abs(rng.normal(0, 0.01, 40)))
    l = np.minimum(o, c) * np.exp(-np.abs(rng.normal(0, 0.01, 40)))
    got = garman_klass(o, h, l, c)
    want = [oracle_gk(*row) for row in zip(o, h, l, c)]
    np.testing.assert_allclose(got, want, atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_rolling_matches_oracle(seed):
    xs = random_walk(np.random.default_rng(seed), 60)
    for window in (2, 5, 20):
        mean, std = rolling_stats(xs, window)
        omean, ostd = oracle_rolling(xs, window)
        np.testing.assert_allclose(mean[window - 1 :], omean[window - 1 :], atol=1e-9)
        np.testing.assert_allclose(std[window - 1 :], ostd[window - 1 :], atol=1e-9)
        assert np.isnan(mean[: window - 1]).all() and np.isnan(std[: window - 1]).all()


# -- frozen hand values --------------------------------------------------------


def test_ema_hand_values():
    # span 3 -> alpha 0.5; seeded at the first observation
    np.testing.assert_allclose(ema([1.0, 2.0, 3.0], 3), [1.0, 1.5, 2.25], atol=0)


def test_gk_hand_value():
    # O=100 H=102 L=99 C=101, straight from the formula
    assert garman_klass(100.0, 102.0, 99.0, 101.0) == pytest.approx(
        0.00040735305352545994, abs=1e-15
    )


def test_gk_clamps_negative_estimates():
    # needs a malformed bar (range narrower than the close-open move):
    # for valid OHLC the raw estimate is provably non-negative
    assert garman_klass(100.0, 120.1, 119.9, 120.0) == 0.0


def test_rolling_hand_values():
    mean, std = rolling_stats([1.0, 2.0, 3.0], 3)
    assert mean[2] == pytest.approx(2.0, abs=0)
    assert std[2] == pytest.approx(0.816496580927726, abs=1e-15)


def test_rsi_flat_series_is_neutral():
    flat = [50.0] * 30
    out = rsi14(flat)
    np.testing.assert_allclose(out[14:], 50.0, atol=0)


def test_rsi_monotone_rise_is_100():
    out = rsi14(list(range(1, 31)))
    np.testing.assert_allclose(out[14:], 100.0, atol=0)


# -- properties ----------------------------------------------------------------


@given(st.lists(st.floats(min_value=1.0, max_value=1000.0), min_size=2, max_size=40))
def test_ema_stays_within_series_range(xs):
    out = ema(xs, 5)
    assert out.min() >= min(xs) - 1e-9
    assert out.max() <= max(xs) + 1e-9


@given(
    st.lists(st.floats(min_value=-10.0, max_value=10.0), min_size=5, max_size=30),
    st.integers(min_value=2, max_value=5),
)
def test_rolling_std_non_negative(xs, window):
    _, std = rolling_stats(xs, window)
    valid = std[~np.isnan(std)]
    assert (valid >= 0.0).all()


@given(st.integers(min_value=0, max_value=500))
def test_gk_non_negative(seed):
    rng = np.random.default_rng(seed)
    c = 100.0 * math.exp(rng.normal(0, 0.02))
    o = 100.0
    h = max(o, c) * math.exp(abs(rng.normal(0, 0.01)))
    l = min(o, c) * math.exp(-abs(rng.normal(0, 0.01)))
    assert garman_klass(o, h, l, c) >= 0.0


# -- guards ---------------------------------------------------------------------


def test_rsi_needs_history():
    with pytest.raises(InsufficientHistoryError):
        rsi14([1.0] * 10)


def test_macd_needs_history():
    with pytest.raises(InsufficientHistoryError):
        macd([1.0] * 34)


def test_rolling_window_of_one_rejected():
    with pytest.raises(ValidationError):
        rolling_stats([1.0, 2.0], 1)


def test_gk_rejects_non_positive_prices():
    with pytest.raises(ValidationError):
        garman_klass(0.0, 1.0, 0.5, 1.0)


# -- feature panel ---------------------------------------------------------------


class TestFeaturePanel:
    def test_warmup_is_dropped(self, panel, features):
        assert features.offset == WARMUP_DAYS
        assert features.dates == panel.dates[WARMUP_DAYS:]
        assert features.n_days == panel.n_days - WARMUP_DAYS

    def test_all_values_finite(self, features):
        from sigblend.indicators import FEATURE_NAMES

        for name in FEATURE_NAMES:
            assert np.isfinite(getattr(features, name)).all(), name

    def test_lag_return_is_previous_log_return(self, panel, features):
        i = 5
        t = features.offset + i
        j = 2
        want = math.log(panel.close[t - 1, j] / panel.close[t - 2, j])
        assert features.lag_return[i, j] == pytest.approx(want, abs=1e-12)

    def test_vwap_gap_definition(self, panel, features):
        i, j = 3, 1
        t = features.offset + i
        want = panel.vwap[t, j] / panel.close[t, j] - 1.0
        assert features.vwap_gap[i, j] == want

    def test_volume_pressure_definition(self, panel, features):
        i, j = 7, 0
        t = features.offset + i
        ma = panel.volume[t - 19 : t + 1, j].mean()
        assert features.volume_pressure[i, j] == pytest.approx(
            panel.volume[t, j] / ma, rel=1e-12
        )

    def test_columns_match_single_series_ops(self, panel, features):
        j = 3
        closes = panel.close[:, j]
        line, sig = macd(closes)
        np.testing.assert_allclose(features.macd_line[:, j], line[WARMUP_DAYS:], atol=0)
        np.testing.assert_allclose(features.macd_signal[:, j], sig[WARMUP_DAYS:], atol=0)
        np.testing.assert_allclose(features.rsi14[:, j], rsi14(closes)[WARMUP_DAYS:], atol=0)

    def test_short_panel_rejected(self):
        spec = MarketSpec(n_days=WARMUP_DAYS)
        with pytest.raises(InsufficientHistoryError):
            build_features(make_panel(spec, seed=1))

    def test_vector_accessor(self, features):
        date = features.dates[4]
        ticker = features.tickers[1]
        v_line = features.vector(ticker, date, "line")
        v_sig = features.vector(ticker, date, "signal")
        i = features.date_index[date]
        assert v_line.macd == features.macd_line[i, 1]
        assert v_sig.macd == features.macd_signal[i, 1]
        assert v_line.rsi14 == v_sig.rsi14

    def test_grids_are_read_only(self, features):
        with pytest.raises(ValueError):
            features.rsi14[0, 0] = 1.0
