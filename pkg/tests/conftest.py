import pytest

from finitegap import curve as cv

GENUS2_REAL = (-3, -2, -1, 0.5, 1.5, 2.5)
GENUS3_COMPLEX = (-3 + 0.2j, -2, -1 - 0.3j, 0.5, 1.5 + 0.1j, 2.5, 3.3, 4.1 - 0.2j)
GENUS2_COMPLEX = (1 + 1j, 1 - 1j, 2 + 0.5j, 2 - 0.5j, -1 + 2j, -1.5 - 2j)


@pytest.fixture(scope="session")
def period_cache():
    cache = {}

    def get(points):
        key = tuple(complex(p) for p in points)
        if key not in cache:
            cache[key] = cv.period_matrices(cv.CurveSpec(points))
        return cache[key]

    return get


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} [{detail}]"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
