import numpy as np
import pytest

from protosel import FitnessContext, OnDemandProvider, generate_blobs


@pytest.fixture(scope="session")
def blobs():
    return generate_blobs(4, 50, 3, 0.4, 11)


@pytest.fixture
def provider(blobs):
    return OnDemandProvider(blobs)


@pytest.fixture
def ctx(blobs, provider):
    v = np.arange(blobs.n)
    return FitnessContext(provider, v, blobs.labels, labels=blobs.labels)


def line_dataset(points, labels=None):
    """Objects on the real line, handy for hand-checkable distances."""
    from protosel import Dataset

    points = np.asarray(points, dtype=float).reshape(-1, 1)
    if labels is None:
        labels = ["a"] * len(points)
    return Dataset(points, np.asarray(labels))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
