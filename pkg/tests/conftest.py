import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# One line per acceptance criterion, printed at the end of the session.
CRITERIA = {}


def record(number, passed, detail):
    CRITERIA.setdefault(number, []).append((bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        parts = CRITERIA[number]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
