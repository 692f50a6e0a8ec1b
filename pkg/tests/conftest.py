import numpy as np
import pytest

import viewalign as va


@pytest.fixture(scope="session")
def chair():
    return va.chair_template()


@pytest.fixture(scope="session")
def scheme():
    return va.build_scheme()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
