import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from defcure.data import CompetingRisksDataset
from defcure.likelihood import get_kernel


def available_backends():
    out = ["python"]
    try:
        get_kernel("cython")
        out.append("cython")
    except ImportError:
        pass
    return out


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param


@pytest.fixture
def small_dataset():
    """Two observations, two causes, one covariate."""
    return CompetingRisksDataset.from_arrays(
        left=[2.0, 1.0], right=[math.inf, 2.0], cause=[0, 1],
        covariates=[[0.0], [0.0]], num_causes=2)


def random_dataset(rng, n=40, k=2, p=2):
    left = rng.uniform(0, 3, n)
    width = rng.uniform(0.2, 1.0, n)
    cause = rng.integers(0, k + 1, n)
    right = np.where(cause == 0, np.inf, left + width)
    X = np.column_stack([rng.binomial(1, 0.5, n), rng.uniform(0, 1, n)])[:, :p]
    return CompetingRisksDataset.from_arrays(left, right, cause, X, num_causes=k)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
