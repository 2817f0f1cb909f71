import numpy as np
import pytest
from hypothesis import settings

from imlca.domain import two_item_instance, two_item_reports
from imlca.model import Allocation, Bundle, ValuationView

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile("default")

A, B, AB, EMPTY = 1, 2, 3, 0


def bundle(text: str, m: int = 2) -> Bundle:
    return Bundle.parse(text, m)


def alloc(*texts: str, m: int = 2) -> Allocation:
    return Allocation(tuple(Bundle.parse(t, m) for t in texts))


@pytest.fixture
def toy():
    return two_item_instance()


@pytest.fixture
def toy_reports():
    return two_item_reports()


@pytest.fixture
def toy_truth(toy):
    return ValuationView.true(toy.values)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_profile(seed, n=3, m=3, k=3, exact=False, max_width=5.0):
    """Up to ``k`` random interval reports per bidder on random non-empty bundles."""
    from imlca.model import IntervalReport, ReportSet

    rng = np.random.default_rng(seed)
    prof = []
    for i in range(n):
        rs = ReportSet(i, m)
        for mk in sorted(set(int(x) for x in rng.integers(1, 1 << m, size=k))):
            lo = float(rng.uniform(0, 10))
            hi = lo if exact else lo + float(rng.uniform(0, max_width))
            rs.add(IntervalReport(Bundle(mk, m), lo, hi))
        prof.append(rs)
    return prof


# One (name, passed, detail) entry per acceptance criterion, printed after the run.
ACCEPTANCE: list[tuple[str, bool, str]] = []


def acceptance(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((name, bool(passed), detail))
    print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    assert passed, f"{name}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
