from pathlib import Path

import numpy as np
import pytest

from ccbounds.cbox import random_box

DATA = Path(__file__).resolve().parents[1] / "src" / "ccbounds" / "data"
EXAMPLE_BOXES = ["constant_box.json", "identity_box.json", "bb84_ensemble.json", "trine_box.json"]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


def small_random_boxes(count=20, seed=7):
    """Random S=2 boxes with A <= 3 and M <= 3, plus their labels."""
    gen = np.random.default_rng(seed)
    out = []
    for i in range(count):
        A = int(gen.integers(2, 4))
        M = int(gen.integers(1, 4))
        out.append(random_box(gen, 2, A, M))
    return out


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES.append((number, f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
