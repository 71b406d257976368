import random

import pytest

from rialto.group import default_params, test_params as _test_params


@pytest.fixture
def tp():
    """The order-11 subgroup of Z_23^*, small enough to enumerate."""
    return _test_params()


@pytest.fixture
def pp():
    return default_params()


@pytest.fixture
def rng():
    return random.Random(1234)
