import numpy as np
import pytest

from acvmlr.model import Dataset

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record a one-line PASS/FAIL verdict, echoed in the terminal summary."""

    def record(name: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)


def random_dataset(rng, M, N, L, scale=1.0):
    X = rng.normal(0.0, scale, (M, N))
    y = rng.integers(0, L, M)
    y[:L] = np.arange(L)
    return Dataset(X, y, L)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
