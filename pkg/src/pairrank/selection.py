"""Which ordered pairs get compared.

Seeded strategies draw from NumPy's PCG64 generator (``numpy.random.default_rng``),
so a seed reproduces the same pair list on any platform running the same
NumPy major version.

Random subsets are prefixes of one seeded shuffle of all N(N-1) ordered pairs:
``RandomK(k, seed)`` for k < k' is always contained in ``RandomK(k', seed)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import CapacityError, ConfigurationError


@dataclass(frozen=True)
class FullOrdered:
    """All N(N-1) ordered pairs, row-major."""


@dataclass(frozen=True)
class FullUnordered:
    """One pair (i, j) with i < j per unordered pair."""


@dataclass(frozen=True)
class RandomK:
    k: int
    seed: int = 0


@dataclass(frozen=True)
class RoundRobinPlusRandom:
    """A random Hamilton cycle (N pairs) followed by k - N random distinct pairs."""

    k: int
    seed: int = 0


@dataclass(frozen=True)
class SampledWithReplacement:
    """k ordered pairs drawn uniformly with replacement; repeats allowed.

    Used for training-pair export, where the draw count can exceed N(N-1).
    """

    k: int
    seed: int = 0


SelectionStrategy = Union[FullOrdered, FullUnordered, RandomK, RoundRobinPlusRandom, SampledWithReplacement]


def n_ordered(n: int) -> int:
    return n * (n - 1)


def decode_ordered(n: int, codes: np.ndarray) -> np.ndarray:
    """Map codes in [0, N(N-1)) to ordered pairs (i, j), i != j, in row-major order."""
    codes = np.asarray(codes, dtype=np.int64)
    i = codes // (n - 1)
    j = codes % (n - 1)
    j = j + (j >= i)
    return np.stack([i, j], axis=1)


def encode_ordered(n: int, pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    i, j = pairs[:, 0], pairs[:, 1]
    return i * (n - 1) + j - (j > i)


def shuffled_pairs(n: int, seed: int) -> np.ndarray:
    """All ordered pairs in one seeded random order."""
    rng = np.random.default_rng(seed)
    return decode_ordered(n, rng.permutation(n_ordered(n)))


def subset_prefix(full_order: np.ndarray, k: int) -> np.ndarray:
    if not 0 <= k <= len(full_order):
        raise CapacityError(f"K={k} outside [0, {len(full_order)}]")
    return full_order[:k]


def _check_capacity(n: int, k: int) -> None:
    if k < 0:
        raise ConfigurationError(f"K must be non-negative, got {k}")
    if k > n_ordered(n):
        raise CapacityError(f"K={k} exceeds the {n_ordered(n)} ordered pairs available for N={n}")


def select_pairs(n: int, strategy: SelectionStrategy) -> np.ndarray:
    """Return a ``(K, 2)`` int array of ordered index pairs."""
    if n < 2:
        raise ConfigurationError(f"need N >= 2 items, got {n}")

    if isinstance(strategy, FullOrdered):
        return decode_ordered(n, np.arange(n_ordered(n)))

    if isinstance(strategy, FullUnordered):
        i, j = np.triu_indices(n, k=1)
        return np.stack([i, j], axis=1).astype(np.int64)

    if isinstance(strategy, RandomK):
        _check_capacity(n, strategy.k)
        return subset_prefix(shuffled_pairs(n, strategy.seed), strategy.k)

    if isinstance(strategy, RoundRobinPlusRandom):
        _check_capacity(n, strategy.k)
        if strategy.k < n:
            raise ConfigurationError(f"RoundRobinPlusRandom needs K >= N ({strategy.k} < {n})")
        rng = np.random.default_rng(strategy.seed)
        perm = rng.permutation(n)
        cycle = np.stack([perm, np.roll(perm, -1)], axis=1)
        rest = rng.permutation(n_ordered(n))
        rest = rest[~np.isin(rest, encode_ordered(n, cycle))]
        extra = decode_ordered(n, rest[: strategy.k - n])
        return np.concatenate([cycle, extra]).astype(np.int64)

    if isinstance(strategy, SampledWithReplacement):
        if strategy.k < 0:
            raise ConfigurationError(f"K must be non-negative, got {strategy.k}")
        rng = np.random.default_rng(strategy.seed)
        return decode_ordered(n, rng.integers(0, n_ordered(n), size=strategy.k))

    raise ConfigurationError(f"unknown selection strategy {strategy!r}")


def parse_k(token: str | int, n: int) -> int:
    """Parse budget tokens such as ``200``, ``N``, ``4N``, ``0.5N`` or ``full``."""
    if isinstance(token, int):
        return token
    t = token.strip().lower()
    if t == "full":
        return n_ordered(n)
    if t.endswith("n"):
        mult = t[:-1] or "1"
        try:
            return int(round(float(mult) * n))
        except ValueError:
            raise ConfigurationError(f"bad K token {token!r}") from None
    try:
        return int(t)
    except ValueError:
        raise ConfigurationError(f"bad K token {token!r}") from None
