import numpy as np
import pytest

from gksm.operators import DenseOperator


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def dense_op(rng):
    """A well conditioned 40x30 complex operator."""
    return DenseOperator(crandn(rng, 40, 30) / np.sqrt(80))


def pytest_terminal_summary(terminalreporter):
    from _report import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
