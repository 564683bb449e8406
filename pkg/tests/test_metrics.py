import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import pearsonr

from routechoice.errors import InvalidInputError, UndefinedCorrelationError
from routechoice.metrics import norm_of_error, pearson, pearson_or_none

vectors = st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30)


def test_perfect_and_inverse():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_matches_scipy(rng):
    x, y = rng.normal(size=50), rng.normal(size=50)
    assert pearson(x, y) == pytest.approx(pearsonr(x, y)[0], abs=1e-12)


@given(vectors, st.data())
def test_bounded_and_symmetric(x, data):
    y = data.draw(st.lists(st.floats(-1e3, 1e3), min_size=len(x), max_size=len(x)))
    r = pearson_or_none(x, y)
    if r is None:
        return
    assert -1.0 <= r <= 1.0
    assert r == pytest.approx(pearson(y, x), abs=1e-12)


def test_zero_variance():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])
    assert pearson_or_none([1, 1], [1, 2]) is None


@pytest.mark.parametrize("x,y", [([1], [1]), ([1, 2], [1, 2, 3])])
def test_invalid(x, y):
    with pytest.raises(InvalidInputError):
        pearson(x, y)


def test_norm_of_error():
    assert norm_of_error([0.5, 0.5], [0.8, 0.1]) == pytest.approx(0.5)
    with pytest.raises(InvalidInputError):
        norm_of_error([1.0], [0.5, 0.5])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.data())
def test_norm_is_a_metric(a, data):
    b = data.draw(st.lists(st.floats(0, 1), min_size=len(a), max_size=len(a)))
    assert norm_of_error(a, a) == 0.0
    assert norm_of_error(a, b) == pytest.approx(norm_of_error(b, a))
    assert norm_of_error(a, b) >= 0.0
