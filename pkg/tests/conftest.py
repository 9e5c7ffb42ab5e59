from pathlib import Path

import numpy as np
import pytest

from loadshare.model import Dataset

DATA = Path(__file__).parent / "data"

X1 = [0.22, 0.01, 0.23, 0.14, 0.24, 0.05, 0.17, 0.37, 0.05, 0.16]
C1 = [1, 1, 3, 1, 2, 1, 2, 1, 1, 2]
X2 = [0.58, 0.32, 0.84, 0.32, 0.39, 0.20, 0.25, 1.32, 0.29, 0.21]
C2 = [2, 2, 2, 3, 1, 2, 1, 3, 2, 1]


def reference_dataset() -> Dataset:
    return Dataset(3, np.column_stack([X1, X2]), np.column_stack([C1, C2]))


@pytest.fixture
def ref():
    return reference_dataset()


@pytest.fixture
def ref_csv():
    return DATA / "reference.csv"


def random_dataset(rng, n, s, r, alpha=None):
    """Valid dataset with exponential-looking times and random distinct sources."""
    times = np.cumsum(rng.exponential(1.0, (r, s)) + 1e-3, axis=1)
    sources = np.array([rng.permutation(n)[:s] + 1 for _ in range(r)])
    return Dataset(n, times, sources)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for name in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[name])
