"""
Shared pytest configuration and fixtures.

Statistical and closed-loop reproductions are marked ``slow`` and only run
with ``--runslow``.
"""

import numpy as np
import pytest

from src.services.generators import example31


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def ex31():
    """The two-dimensional quadratic with R = 100 I."""
    return example31()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
