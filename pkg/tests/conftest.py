from pathlib import Path

import numpy as np
import pytest

from additive_ae.dataio import load_csv, prepare

DATA = Path(__file__).parent / "data"

_criteria: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def criteria():
    """Collects one (criterion, passed, detail) line per acceptance criterion."""
    return _criteria


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _criteria:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def glass():
    return prepare(load_csv(DATA / "glass.csv", has_header=True))


@pytest.fixture(scope="session")
def wine():
    return prepare(load_csv(DATA / "wine.csv", has_header=True))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def curved_data(N=120, d=2, n=5, seed=0):
    """Points on a smooth d-dimensional surface in n dimensions, normalized."""
    from additive_ae.dataio import RawTable

    r = np.random.default_rng(seed)
    z = r.uniform(-1, 1, size=(N, d))
    cols = [z, np.sin(2 * z), z[:, :1] * z[:, -1:], np.cos(np.pi * z)]
    X = np.hstack(cols)[:, :n]
    return prepare(RawTable(X))
