import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import union_find_connected
from pairrank.errors import CapacityError, ConfigurationError
from pairrank.selection import (
    FullOrdered,
    FullUnordered,
    RandomK,
    RoundRobinPlusRandom,
    SampledWithReplacement,
    decode_ordered,
    encode_ordered,
    parse_k,
    select_pairs,
    shuffled_pairs,
    subset_prefix,
)


def as_set(pairs):
    return {tuple(p) for p in pairs.tolist()}


def test_full_ordered_three():
    pairs = select_pairs(3, FullOrdered())
    assert len(pairs) == 6
    assert as_set(pairs) == {(i, j) for i in range(3) for j in range(3) if i != j}


def test_full_unordered():
    pairs = select_pairs(5, FullUnordered())
    assert len(pairs) == 10
    assert all(i < j for i, j in pairs.tolist())


def test_four_n_point():
    pairs = select_pairs(50, RandomK(200, seed=1))
    assert len(pairs) == 200
    assert len(as_set(pairs)) == 200
    assert np.all(pairs[:, 0] != pairs[:, 1])


def test_round_robin_small():
    pairs = select_pairs(5, RoundRobinPlusRandom(5, seed=3))
    connected, touched = union_find_connected(5, pairs.tolist())
    assert connected and touched == set(range(5))


def test_capacity():
    with pytest.raises(CapacityError):
        select_pairs(4, RandomK(13))
    with pytest.raises(ConfigurationError):
        select_pairs(6, RoundRobinPlusRandom(5))
    with pytest.raises(ConfigurationError):
        select_pairs(1, FullOrdered())


def test_encode_decode_roundtrip():
    n = 7
    codes = np.arange(n * (n - 1))
    pairs = decode_ordered(n, codes)
    assert np.array_equal(encode_ordered(n, pairs), codes)
    assert np.array_equal(pairs, select_pairs(n, FullOrdered()))


class TestPrefix:
    def test_empty_and_full(self):
        order = shuffled_pairs(6, 0)
        assert len(subset_prefix(order, 0)) == 0
        assert np.array_equal(subset_prefix(order, len(order)), order)
        with pytest.raises(CapacityError):
            subset_prefix(order, len(order) + 1)

    def test_nested(self):
        order = shuffled_pairs(20, 4)
        assert np.array_equal(subset_prefix(order, 20)[:10], subset_prefix(order, 10))

    def test_random_k_nested(self):
        assert np.array_equal(select_pairs(30, RandomK(120, 7))[:60], select_pairs(30, RandomK(60, 7)))


@settings(max_examples=80)
@given(st.integers(2, 25), st.integers(0, 10_000), st.data())
def test_selection_invariants(n, seed, data):
    k = data.draw(st.integers(n, n * (n - 1)))
    for strategy in (RandomK(k, seed), RoundRobinPlusRandom(k, seed)):
        pairs = select_pairs(n, strategy)
        assert len(pairs) == k
        assert np.all(pairs[:, 0] != pairs[:, 1])
        assert len(as_set(pairs)) == k
        assert np.array_equal(pairs, select_pairs(n, strategy))
    connected, touched = union_find_connected(n, select_pairs(n, RoundRobinPlusRandom(k, seed)).tolist())
    assert connected and len(touched) == n


def test_with_replacement_allows_repeats():
    pairs = select_pairs(3, SampledWithReplacement(100, seed=0))
    assert len(pairs) == 100
    assert np.all(pairs[:, 0] != pairs[:, 1])
    assert len(as_set(pairs)) <= 6


def test_identical_across_processes():
    code = ("import sys; from pairrank.selection import select_pairs, RandomK;"
            "sys.stdout.write(select_pairs(40, RandomK(160, 12345)).tobytes().hex())")
    outs = {subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
            for _ in range(2)}
    assert len(outs) == 1
    assert outs.pop() == select_pairs(40, RandomK(160, 12345)).tobytes().hex()


@pytest.mark.parametrize("token,expected", [("N", 50), ("4N", 200), ("0.5n", 25), ("full", 2450), ("123", 123), (7, 7)])
def test_parse_k(token, expected):
    assert parse_k(token, 50) == expected


def test_parse_k_bad():
    with pytest.raises(ConfigurationError):
        parse_k("xN", 5)
