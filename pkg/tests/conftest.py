import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    """Store one acceptance line: ``record(number, passed, detail)``."""

    def _record(number: int, passed: bool, detail: str, seconds: float) -> None:
        ACCEPTANCE[number] = (bool(passed), detail, seconds)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}  ({seconds:.1f} s)")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail, seconds = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}  ({seconds:.1f} s)")
