import numpy as np
import pytest

from setrank.data import TEST, TRAIN, VALIDATION, ImplicitDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_split_dataset(n_users=6, n_items=15, n_pos=6, seed=0):
    """Small dataset where each user has 3 train, 1 validation and the rest test."""
    g = np.random.default_rng(seed)
    positives, tags = [], []
    for _ in range(n_users):
        items = g.choice(n_items, size=n_pos, replace=False)
        t = np.full(n_pos, TEST, dtype=np.uint8)
        t[:3] = TRAIN
        t[3] = VALIDATION
        positives.append(items)
        tags.append(t)
    return ImplicitDataset.from_lists(positives, n_items, tags=tags)


@pytest.fixture
def split_ds():
    return make_split_dataset()


# One PASS/FAIL line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
