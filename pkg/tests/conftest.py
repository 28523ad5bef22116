import os
import sys
from pathlib import Path

import numpy as np
import pytest

from sbekmeans.core import Dataset, init_explicit
from sbekmeans.data import load_csv

sys.path.insert(0, os.path.dirname(__file__))

DATA_DIR = Path(__file__).parent / "data"

ACCEPTANCE_LINES = []


@pytest.fixture
def four_points():
    return Dataset(np.array([[0.0], [2.0], [10.0], [12.0]]))


@pytest.fixture
def two_centers():
    return init_explicit([[1.0], [11.0]])


@pytest.fixture(scope="session")
def iris():
    return load_csv(DATA_DIR / "iris.csv", has_header=True, label_column=-1)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
