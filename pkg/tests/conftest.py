import os
from pathlib import Path

import pytest

from otapcm.data import DATA_ROOT_ENV

REPO = Path(__file__).resolve().parents[1]
VERDICTS: list[tuple[int, bool, str]] = []


def mnist_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV) or REPO / "data" / "mnist")


@pytest.fixture
def verdict():
    """Record one acceptance verdict line; the test still asserts separately."""
    def record(n: int, ok: bool, detail: str) -> bool:
        VERDICTS.append((n, bool(ok), detail))
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(VERDICTS):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
