import numpy as np
import pytest
from hypothesis import given, strategies as st

from multiform._validation import (
    check_array_1d,
    check_int,
    check_prime,
    check_probability,
    is_prime,
    make_rng,
    n_workers,
)


def test_check_int_rejects_bool_and_float():
    with pytest.raises(TypeError):
        check_int(True, "n")
    with pytest.raises(TypeError):
        check_int(2.0, "n")
    assert check_int(np.int64(3), "n") == 3


def test_check_int_bounds():
    with pytest.raises(ValueError, match="n must be >= 1"):
        check_int(0, "n", minimum=1)
    with pytest.raises(ValueError):
        check_int(5, "n", maximum=4)


@given(st.integers(min_value=0, max_value=2000))
def test_is_prime_matches_sieve(n):
    expected = n >= 2 and all(n % k for k in range(2, int(n**0.5) + 1))
    assert is_prime(n) == expected


def test_check_prime():
    assert check_prime(7) == 7
    with pytest.raises(ValueError):
        check_prime(9)
    with pytest.raises(ValueError):
        check_prime(2)


@pytest.mark.parametrize("p", [0.0, -0.1, 1.5, float("nan")])
def test_check_probability_rejects(p):
    with pytest.raises(ValueError):
        check_probability(p)


def test_check_array_1d():
    assert check_array_1d([1, 2], "f", length=2).dtype == float
    with pytest.raises(ValueError):
        check_array_1d([[1.0]], "f")
    with pytest.raises(ValueError):
        check_array_1d([1.0, np.inf], "f")
    with pytest.raises(ValueError):
        check_array_1d([1.0], "f", length=3)


def test_streams_reproducible_and_distinct():
    a = make_rng(5, 1, 2).random(4)
    b = make_rng(5, 1, 2).random(4)
    c = make_rng(5, 2, 1).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_n_workers_env(monkeypatch):
    monkeypatch.setenv("MULTIFORM_THREADS", "3")
    assert n_workers() == 3
    monkeypatch.setenv("MULTIFORM_THREADS", "0")
    assert n_workers() == 1
    monkeypatch.delenv("MULTIFORM_THREADS")
    assert n_workers(2) == 2
