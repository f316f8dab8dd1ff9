import numpy as np
import pytest

from nsm.core import Dataset

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    prev = ACCEPTANCE.get(criterion)
    if prev is not None:
        passed = passed and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def line_data(positions) -> Dataset:
    return Dataset(np.asarray(positions, dtype=np.float64)[:, None])


@pytest.fixture
def x_line() -> Dataset:
    return line_data([0, 1, 10, 11])


@pytest.fixture
def x6() -> Dataset:
    return line_data([0, 1, 2, 10, 11, 12])


@pytest.fixture
def x4() -> Dataset:
    return line_data([0, 1, 2, 3])
