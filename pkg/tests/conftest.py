from __future__ import annotations

import numpy as np
import pytest

from agreement_lab.corpus import make_appendix_a, make_identical, make_xor, random_structure

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"[criterion {criterion:2d}] {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def xor():
    return make_xor()


@pytest.fixture
def appendix_a():
    return make_appendix_a()


@pytest.fixture
def identical():
    return make_identical([0.2, 0.3, 0.5], [0.1, 0.5, 0.8], "id3")


@pytest.fixture
def rand44():
    return random_structure(4, 4, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
