from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

_acceptance: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    """Store one acceptance verdict; the summary hook prints them in order."""
    _acceptance[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        ok, detail = _acceptance[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def data_dir() -> Path:
    return DATA
