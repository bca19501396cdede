import numpy as np
import pytest
from hypothesis import strategies as st

from biointeract.tabular import CELL_KEYS, ExposureTable, generate_hammond_dataset

# cell counts produced by the generator for the published inputs, worked by hand
HAMMOND_COUNTS = {(0, 0): (6, 53109), (1, 0): (25, 20653), (0, 1): (7, 12816), (1, 1): (30, 4984)}


@pytest.fixture(scope="session")
def hammond():
    return generate_hammond_dataset()


def observed(table):
    return np.array([table.risk(*k) for k in CELL_KEYS])


def random_interior_table(rng, low=20, high=3000):
    counts = {}
    for k in CELL_KEYS:
        n = int(rng.integers(low, high))
        counts[k] = (int(rng.integers(1, n)), n)
    return ExposureTable.from_counts(counts)


@st.composite
def interior_tables(draw, max_total=2000):
    counts = {}
    for k in CELL_KEYS:
        n = draw(st.integers(10, max_total))
        e = draw(st.integers(1, n - 1))
        counts[k] = (e, n)
    return ExposureTable.from_counts(counts)


@st.composite
def tables(draw, max_total=60):
    counts = {}
    for k in CELL_KEYS:
        n = draw(st.integers(1, max_total))
        counts[k] = (draw(st.integers(0, n)), n)
    return ExposureTable.from_counts(counts)


# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" ({detail})" if detail else "")
        print(line)
        _CRITERIA.append(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
