import numpy as np
import pytest
from hypothesis import HealthCheck, assume, settings
from hypothesis import strategies as st

from provider_competition import Market

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def two_user_market() -> Market:
    """Mirror-image users, one near each provider."""
    return Market.from_arrays([1.0, 1.0], [1.0, 2.0], [2.0, 1.0], 1.0, 1.0)


def one_user_market(Q1: float = 1.0, Q2: float = 1.0) -> Market:
    return Market.from_arrays([1.0], [1.0], [1.0], Q1, Q2)


@pytest.fixture
def two_users() -> Market:
    return two_user_market()


@pytest.fixture
def one_user() -> Market:
    return one_user_market()


positive = st.floats(min_value=0.01, max_value=10.0, allow_nan=False, allow_infinity=False)
supply = st.floats(min_value=0.1, max_value=100.0, allow_nan=False, allow_infinity=False)


@st.composite
def markets(draw, min_users: int = 1, max_users: int = 12) -> Market:
    n = draw(st.integers(min_users, max_users))
    a = draw(st.lists(positive, min_size=n, max_size=n))
    g1 = draw(st.lists(positive, min_size=n, max_size=n))
    g2 = draw(st.lists(positive, min_size=n, max_size=n))
    # alpha values closer than this leave the cut structure at the mercy of rounding
    alpha = np.sort(np.asarray(g1) / np.asarray(g2))
    assume(n == 1 or np.min(np.diff(alpha) / alpha[1:]) >= 1e-6)
    return Market.from_arrays(a, g1, g2, draw(supply), draw(supply))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; all lines are printed in the terminal summary."""

    def _report(criterion: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
