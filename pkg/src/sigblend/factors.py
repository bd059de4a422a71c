"""Factor regression of strategy returns (five factors plus momentum).

Daily excess strategy returns are regressed on the market excess return,
size, value, profitability, investment, and momentum factor returns with
an intercept. Coefficients come from an economic-size QR factorization
(never an explicit matrix inverse); inference uses classical
homoskedastic standard errors and two-sided p-values from the
t-distribution with n - k degrees of freedom.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, stats

from .errors import AlignmentError, SingularDesignError, ValidationError
from .market_data import FactorRow

REGRESSOR_NAMES = ("const", "mktrf", "smb", "hml", "rmw", "cma", "umd")
MIN_OVERLAP = 30

#: Significance stars: p < 0.05 -> *, p < 0.01 -> **, p < 0.001 -> ***.
_STAR_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


def significance_stars(p_value: float) -> str:
    for level, stars in _STAR_LEVELS:
        if p_value < level:
            return stars
    return ""


@dataclass(frozen=True)
class RegressionResult:
    """OLS estimates with classical inference for one regression."""

    names: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    r_squared: float
    n_obs: int

    def to_rows(self) -> list[dict]:
        return [
            {
                "name": name,
                "coefficient": float(self.coefficients[i]),
                "std_error": float(self.std_errors[i]),
                "t_stat": float(self.t_stats[i]),
                "p_value": float(self.p_values[i]),
                "stars": significance_stars(float(self.p_values[i])),
            }
            for i, name in enumerate(self.names)
        ]


def ols(y, X, names=None) -> RegressionResult:
    """Least squares of ``y`` on the columns of ``X`` via QR.

    ``X`` must already contain the intercept column if one is wanted.
    Rank-deficient designs raise :class:`SingularDesignError` naming the
    first offending column.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if y.ndim != 1 or X.ndim != 2 or X.shape[0] != len(y):
        raise ValidationError(f"incompatible shapes: y {y.shape}, X {X.shape}")
    if not (np.isfinite(y).all() and np.isfinite(X).all()):
        raise ValidationError("regression inputs contain non-finite values")
    n, k = X.shape
    if names is None:
        names = tuple(f"x{i}" for i in range(k))
    names = tuple(names)
    if len(names) != k:
        raise ValidationError(f"{len(names)} names for {k} columns")
    if n <= k:
        raise ValidationError(f"need more observations ({n}) than regressors ({k})")

    q, r = linalg.qr(X, mode="economic")
    diag = np.abs(np.diag(r))
    tol = max(n, k) * np.finfo(float).eps * (diag.max() if diag.max() > 0 else 1.0)
    deficient = np.nonzero(diag <= tol)[0]
    if deficient.size:
        raise SingularDesignError(
            f"design is rank deficient; column {names[deficient[0]]!r} is collinear"
        )
    beta = linalg.solve_triangular(r, q.T @ y)
    residuals = y - X @ beta
    ssr = float(residuals @ residuals)
    dof = n - k
    sigma2 = ssr / dof
    r_inv = linalg.solve_triangular(r, np.eye(k))
    cov = sigma2 * (r_inv @ r_inv.T)
    std_errors = np.sqrt(np.diag(cov))
    # A perfect fit gives zero standard errors; report infinite t for the
    # nonzero coefficients and t = 0 for coefficients that are exactly 0.
    safe_se = np.where(std_errors > 0.0, std_errors, np.inf)
    t_stats = beta / safe_se
    exact = std_errors == 0.0
    if exact.any():
        t_stats = np.where(exact & (beta != 0.0), np.copysign(np.inf, beta), t_stats)
    p_values = 2.0 * stats.t.sf(np.abs(t_stats), dof)
    sst = float(((y - y.mean()) ** 2).sum())
    r_squared = 0.0 if sst == 0.0 else min(max(1.0 - ssr / sst, 0.0), 1.0)
    return RegressionResult(
        names=names,
        coefficients=beta,
        std_errors=std_errors,
        t_stats=t_stats,
        p_values=p_values,
        r_squared=r_squared,
        n_obs=n,
    )


def decompose_strategy(report, factor_rows: list[FactorRow]) -> RegressionResult:
    """Regress a report's excess daily returns on the six factors.

    Joins on the report's return dates (inner join). The intercept is the
    daily alpha left after the factor exposures.
    """
    by_date = {row.date: row for row in factor_rows}
    y = []
    X = []
    for i, day in enumerate(report.dates):
        row = by_date.get(day)
        if row is None:
            continue
        y.append(report.daily_return[i] - row.rf)
        X.append([1.0, row.mktrf, row.smb, row.hml, row.rmw, row.cma, row.umd])
    if len(y) < MIN_OVERLAP:
        raise AlignmentError(
            f"only {len(y)} overlapping days between report ({len(report.dates)}) "
            f"and factors ({len(factor_rows)}); need at least {MIN_OVERLAP}"
        )
    return ols(np.array(y), np.array(X), REGRESSOR_NAMES)


def format_regression(result: RegressionResult) -> str:
    """Fixed-width human-readable table with significance stars."""
    lines = [
        f"n_obs = {result.n_obs}    r_squared = {result.r_squared:.6f}",
        "",
        f"{'term':<8}{'coef':>14}{'std_err':>12}{'t':>10}{'p':>10}  sig",
    ]
    for row in result.to_rows():
        lines.append(
            f"{row['name']:<8}{row['coefficient']:>14.6g}{row['std_error']:>12.4g}"
            f"{row['t_stat']:>10.3f}{row['p_value']:>10.4f}  {row['stars']}"
        )
    lines.append("")
    lines.append("stars: * p<0.05, ** p<0.01, *** p<0.001")
    return "\n".join(lines) + "\n"


def write_regression(result: RegressionResult, csv_path: str | Path, text_path: str | Path) -> None:
    """Write machine-readable CSV and a formatted text table."""
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["term", "coefficient", "std_error", "t_stat", "p_value", "stars"])
        for row in result.to_rows():
            writer.writerow(
                [
                    row["name"],
                    repr(row["coefficient"]),
                    repr(row["std_error"]),
                    repr(row["t_stat"]),
                    repr(row["p_value"]),
                    row["stars"],
                ]
            )
        writer.writerow(["r_squared", repr(result.r_squared), "", "", "", ""])
        writer.writerow(["n_obs", str(result.n_obs), "", "", "", ""])
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(format_regression(result))
