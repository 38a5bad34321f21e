import numpy as np
import pytest

import lqr_homotopy as lh


@pytest.fixture(scope="session")
def reference():
    """Canonical trap instantiation: problem, class, dist, geometry, constants."""
    return lh.reference_instantiation()


@pytest.fixture(scope="session")
def benchmark_problem():
    """The scalar benchmark system used for the continuation experiments."""
    return lh.LqrProblem.scalar(0.1, 1.0, 1.0, 0.1)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
