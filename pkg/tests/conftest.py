import numpy as np
import pytest

from divine.dataset import SplitSpec, generate_synthetic, split, standardize, toy_fixture


@pytest.fixture(scope="session")
def synth_splits():
    ds = generate_synthetic(seed=0)
    return standardize(*split(ds, SplitSpec(seed=0)))


@pytest.fixture(scope="session")
def small_synth():
    """Standardized n=200 training set."""
    ds = generate_synthetic(n_main=190, n_outlier=10, seed=3)
    return standardize(ds)[0]


@pytest.fixture
def toy():
    return toy_fixture()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for k, m in sys.modules.items() if k.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
