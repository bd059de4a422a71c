"""Regression tests against an independent normal-equations solver."""

import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from sigblend.backtest import CostModel, run_long_short
from sigblend.errors import AlignmentError, SingularDesignError, ValidationError
from sigblend.factors import (
    MIN_OVERLAP,
    REGRESSOR_NAMES,
    decompose_strategy,
    format_regression,
    ols,
    significance_stars,
    write_regression,
)
from sigblend.market_data import FactorRow
from sigblend.signals import CombinerConfig, build_signal_frames


def oracle_ols(y, X):
    """Textbook normal equations: beta = (X'X)^-1 X'y, classical SEs."""
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ X.T @ y
    resid = y - X @ beta
    n, k = X.shape
    sigma2 = float(resid @ resid) / (n - k)
    se = np.sqrt(np.diag(sigma2 * xtx_inv))
    t = beta / se
    p = 2.0 * stats.t.sf(np.abs(t), n - k)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / sst
    return beta, se, t, p, r2


def random_problem(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(40, 200))
    k = int(rng.integers(2, 7))
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    beta = rng.normal(size=k)
    y = X @ beta + rng.normal(0, 0.5, n)
    return y, X


class TestAgainstOracle:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_normal_equations(self, seed):
        y, X = random_problem(seed)
        got = ols(y, X)
        beta, se, t, p, r2 = oracle_ols(y, X)
        np.testing.assert_allclose(got.coefficients, beta, atol=1e-8)
        np.testing.assert_allclose(got.std_errors, se, atol=1e-8)
        np.testing.assert_allclose(got.t_stats, t, atol=1e-8)
        np.testing.assert_allclose(got.p_values, p, atol=1e-8)
        assert got.r_squared == pytest.approx(r2, abs=1e-8)

    def test_planted_coefficients_recovered_exactly_without_noise(self):
        rng = np.random.default_rng(2)
        X = np.column_stack([np.ones(100), rng.normal(size=(100, 3))])
        beta = np.array([0.5, -1.25, 2.0, 0.0])
        got = ols(X @ beta, X)
        np.testing.assert_allclose(got.coefficients, beta, atol=1e-10)

    def test_planted_coefficients_within_noise_scale(self):
        rng = np.random.default_rng(3)
        X = np.column_stack([np.ones(5000), rng.normal(size=(5000, 2))])
        beta = np.array([0.1, 1.0, -2.0])
        sigma = 0.01
        got = ols(X @ beta + rng.normal(0, sigma, 5000), X)
        # sampling error is ~sigma/sqrt(n); allow five of those
        assert np.abs(got.coefficients - beta).max() < 5 * sigma / np.sqrt(5000) * 10

    @given(st.integers(min_value=0, max_value=200))
    def test_r_squared_always_in_unit_interval(self, seed):
        y, X = random_problem(seed)
        assert 0.0 <= ols(y, X).r_squared <= 1.0

    @given(st.integers(min_value=0, max_value=100))
    def test_residuals_orthogonal_to_design(self, seed):
        y, X = random_problem(seed)
        got = ols(y, X)
        resid = y - X @ got.coefficients
        assert np.abs(X.T @ resid).max() < 1e-7


class TestDegenerateDesigns:
    def test_collinear_column_named(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=50)
        X = np.column_stack([np.ones(50), x, 2.0 * x])
        with pytest.raises(SingularDesignError, match="dup"):
            ols(rng.normal(size=50), X, names=("const", "base", "dup"))

    def test_constant_y_has_zero_r_squared(self):
        rng = np.random.default_rng(5)
        X = np.column_stack([np.ones(40), rng.normal(size=40)])
        got = ols(np.full(40, 3.0), X)
        assert got.r_squared == 0.0
        assert got.coefficients[0] == pytest.approx(3.0, abs=1e-12)

    def test_float_perfect_fit_is_maximally_significant(self):
        # residuals are rounding noise (~1e-15), so t is huge but finite
        X = np.column_stack([np.ones(10), np.arange(10.0)])
        got = ols(X @ np.array([1.0, 2.0]), X)
        assert got.r_squared == 1.0
        assert (np.abs(got.t_stats) > 1e10).all()
        np.testing.assert_allclose(got.p_values, 0.0, atol=1e-100)

    def test_exactly_zero_target_has_zero_t_and_p_one(self):
        # y = 0 solves exactly: zero betas, zero residuals, zero SEs
        X = np.column_stack([np.ones(10), np.arange(10.0)])
        got = ols(np.zeros(10), X)
        np.testing.assert_array_equal(got.coefficients, 0.0)
        np.testing.assert_array_equal(got.std_errors, 0.0)
        np.testing.assert_array_equal(got.t_stats, 0.0)
        np.testing.assert_array_equal(got.p_values, 1.0)

    def test_more_regressors_than_rows_rejected(self):
        with pytest.raises(ValidationError):
            ols(np.zeros(3), np.eye(3))

    def test_non_finite_inputs_rejected(self):
        X = np.column_stack([np.ones(40), np.arange(40.0)])
        y = np.zeros(40)
        y[3] = np.nan
        with pytest.raises(ValidationError):
            ols(y, X)


class TestStars:
    @pytest.mark.parametrize(
        "p,stars",
        [(0.2, ""), (0.049, "*"), (0.009, "**"), (0.0009, "***"), (0.05, "")],
    )
    def test_thresholds(self, p, stars):
        assert significance_stars(p) == stars


class TestStrategyDecomposition:
    @pytest.fixture
    def report(self, panel, features):
        frames = build_signal_frames(panel, features, CombinerConfig())
        return run_long_short(panel, frames, CostModel(tcost_bps=5.0))

    def test_joins_on_dates_and_subtracts_rf(self, report, factor_rows):
        got = decompose_strategy(report, factor_rows)
        assert got.names == REGRESSOR_NAMES
        by_date = {r.date: r for r in factor_rows}
        y = np.array([report.daily_return[i] - by_date[d].rf for i, d in enumerate(report.dates)])
        X = np.array(
            [
                [1.0, r.mktrf, r.smb, r.hml, r.rmw, r.cma, r.umd]
                for r in (by_date[d] for d in report.dates)
            ]
        )
        beta, *_ = oracle_ols(y, X)
        np.testing.assert_allclose(got.coefficients, beta, atol=1e-8)
        assert got.n_obs == report.n_days

    def test_planted_alpha_and_market_beta(self, factor_rows):
        # fabricate returns = rf + alpha + beta * mktrf with no noise
        alpha, beta_mkt = 2.0e-4, 0.8

        class FakeReport:
            dates = tuple(r.date for r in factor_rows)
            daily_return = np.array([r.rf + alpha + beta_mkt * r.mktrf for r in factor_rows])

        got = decompose_strategy(FakeReport(), factor_rows)
        assert got.coefficients[0] == pytest.approx(alpha, abs=1e-12)
        assert got.coefficients[1] == pytest.approx(beta_mkt, abs=1e-9)
        np.testing.assert_allclose(got.coefficients[2:], 0.0, atol=1e-9)

    def test_insufficient_overlap_raises(self, report, factor_rows):
        with pytest.raises(AlignmentError):
            decompose_strategy(report, factor_rows[: MIN_OVERLAP - 1])

    def test_disjoint_dates_raise(self, report):
        shifted = [
            FactorRow(dt.date(1999, 1, 1) + dt.timedelta(days=i), 0, 0, 0, 0, 0, 0, 0)
            for i in range(100)
        ]
        with pytest.raises(AlignmentError):
            decompose_strategy(report, shifted)

    def test_formatting_and_files(self, tmp_path, report, factor_rows):
        got = decompose_strategy(report, factor_rows)
        text = format_regression(got)
        assert "r_squared" in text
        assert "const" in text
        csv_path, txt_path = tmp_path / "reg.csv", tmp_path / "reg.txt"
        write_regression(got, csv_path, txt_path)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "term,coefficient,std_error,t_stat,p_value,stars"
        assert len(lines) == 1 + len(REGRESSOR_NAMES) + 2  # terms + r2 + n
        assert txt_path.read_text() == text
