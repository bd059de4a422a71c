"""Shared fixtures, hypothesis settings, and the acceptance summary hook."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sigblend import indicators, synthetic

settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

#: One (label, passed, detail) entry per acceptance criterion; printed as a
#: block in the terminal summary so the run ends with explicit verdict lines.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_acceptance(label: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((label, passed, detail))
    suffix = f" ({detail})" if detail else ""
    assert passed, f"FAIL: {label}{suffix}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE_RESULTS:
        verdict = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"{verdict}: {label}{suffix}")


@pytest.fixture(scope="session")
def market_spec():
    return synthetic.MarketSpec(n_days=120)


@pytest.fixture(scope="session")
def panel(market_spec):
    return synthetic.make_panel(market_spec, seed=7)


@pytest.fixture(scope="session")
def features(panel):
    return indicators.build_features(panel)


@pytest.fixture(scope="session")
def factor_rows(market_spec):
    return synthetic.make_factors(market_spec, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
