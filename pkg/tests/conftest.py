"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """``record(number, ok, detail)``; sub-checks of one criterion are combined."""

    def record(number: int, ok: bool, detail: str) -> None:
        CRITERIA.setdefault(number, []).append((bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        parts = CRITERIA[number]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
