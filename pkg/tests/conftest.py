import numpy as np
import pytest

from mgad.graph import build_graph


def random_graph(n, p, d, rng, labeled=0):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    edges = np.column_stack([iu[keep], ju[keep]])
    labels = np.zeros(n, dtype=bool)
    if labeled:
        labels[rng.choice(n, size=labeled, replace=False)] = True
    return build_graph(edges, rng.standard_normal((n, d)), labels=labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_graph(rng):
    return random_graph(20, 0.2, 5, rng, labeled=3)


ACCEPTANCE = {}


def record(name, passed, detail):
    """Register an acceptance outcome; printed at the end of the session."""
    ACCEPTANCE[name] = (bool(passed), detail)
    print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
