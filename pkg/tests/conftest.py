import functools

import pytest

from weylhom.algebra import algebra_from_name


@functools.lru_cache(maxsize=None)
def algebra(name):
    return algebra_from_name(name)


@pytest.fixture
def get_algebra():
    return algebra
