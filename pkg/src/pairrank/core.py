"""Items, comparisons, score vectors and their line-delimited JSON formats.

Ids are opaque strings. Dense integer indices follow insertion order in the
owning :class:`ItemSet` and are what the optimisers work with.
"""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DuplicateIdError,
    ParseError,
    RangeError,
    SelfPairError,
    UnknownIdError,
    ValidationError,
)

MEAN_ZERO_TOL = 1e-9


@dataclass(frozen=True)
class Item:
    id: str
    text: str = ""
    gold_score: float | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError(f"item id must be a non-empty string, got {self.id!r}")
        if self.gold_score is not None:
            score = float(self.gold_score)
            if not math.isfinite(score):
                raise ValidationError(f"item {self.id!r}: gold score must be finite")
            object.__setattr__(self, "gold_score", score)


class ItemSet(Sequence[Item]):
    """Ordered, immutable collection of items with unique ids."""

    def __init__(self, items: Iterable[Item]):
        self._items = tuple(items)
        index: dict[str, int] = {}
        for k, item in enumerate(self._items):
            if item.id in index:
                raise DuplicateIdError(f"duplicate item id {item.id!r}")
            index[item.id] = k
        self._index = index

    @classmethod
    def from_scores(cls, scores: Mapping[str, float] | Sequence[float]) -> ItemSet:
        """Build text-less items from gold scores; sequences get ids ``"0", "1", ...``."""
        if isinstance(scores, Mapping):
            pairs = list(scores.items())
        else:
            pairs = [(str(k), v) for k, v in enumerate(scores)]
        return cls(Item(id=i, text="", gold_score=float(v)) for i, v in pairs)

    def __getitem__(self, k):  # type: ignore[override]
        return self._items[k]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Item]:
        return iter(self._items)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ItemSet):
            return NotImplemented
        return self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        return f"ItemSet(N={len(self)})"

    @property
    def N(self) -> int:
        return len(self._items)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(item.id for item in self._items)

    def index_of(self, item_id: str) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise UnknownIdError(f"unknown item id {item_id!r}") from None

    def __contains__(self, item_id: object) -> bool:
        return item_id in self._index

    def has_gold(self) -> bool:
        return all(item.gold_score is not None for item in self._items)

    def gold_scores(self) -> ScoreVector:
        missing = [item.id for item in self._items if item.gold_score is None]
        if missing:
            raise ValidationError(f"items without gold score: {missing[:5]}")
        values = np.array([item.gold_score for item in self._items], dtype=float)
        return ScoreVector(self.ids, values, Gauge.RAW)


@dataclass(frozen=True)
class Comparison:
    """Judged probability ``p`` that item ``i`` (shown first) beats item ``j``."""

    i: str
    j: str
    p: float

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise SelfPairError(f"self-pair ({self.i!r}, {self.j!r})")
        p = float(self.p)
        if not (0.0 <= p <= 1.0):  # also rejects NaN
            raise RangeError(f"p={self.p!r} outside [0, 1] for ({self.i!r}, {self.j!r})")
        object.__setattr__(self, "p", p)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ComparisonSet:
    """Comparisons over a fixed universe, stored as dense index arrays.

    Repeated ordered pairs are kept; every judgment counts.
    """

    universe: ItemSet
    left: np.ndarray
    right: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        left = np.array(self.left, dtype=np.int64).reshape(-1)
        right = np.array(self.right, dtype=np.int64).reshape(-1)
        p = np.array(self.p, dtype=float).reshape(-1)
        if not (left.shape == right.shape == p.shape):
            raise ValidationError("left, right and p must have equal length")
        n = self.universe.N
        bad = (left < 0) | (left >= n) | (right < 0) | (right >= n)
        if bad.any():
            raise UnknownIdError(f"comparison index out of range at position {int(np.argmax(bad))}")
        same = left == right
        if same.any():
            k = int(np.argmax(same))
            raise SelfPairError(f"self-pair at position {k} ({self.universe[left[k]].id!r})")
        out = ~((p >= 0.0) & (p <= 1.0))
        if out.any():
            k = int(np.argmax(out))
            raise RangeError(f"p={p[k]!r} outside [0, 1] at position {k}")
        object.__setattr__(self, "left", _readonly(left))
        object.__setattr__(self, "right", _readonly(right))
        object.__setattr__(self, "p", _readonly(p))

    @classmethod
    def from_comparisons(cls, universe: ItemSet, comparisons: Iterable[Comparison]) -> ComparisonSet:
        comps = list(comparisons)
        left = [universe.index_of(c.i) for c in comps]
        right = [universe.index_of(c.j) for c in comps]
        return cls(universe, np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                   np.array([c.p for c in comps], dtype=float))

    def __len__(self) -> int:
        return int(self.p.size)

    def __iter__(self) -> Iterator[Comparison]:
        ids = self.universe.ids
        for a, b, p in zip(self.left.tolist(), self.right.tolist(), self.p.tolist()):
            yield Comparison(ids[a], ids[b], p)

    @property
    def comparisons(self) -> list[Comparison]:
        return list(self)

    def is_binary(self) -> bool:
        return bool(np.all((self.p == 0.0) | (self.p == 1.0)))

    def swapped(self) -> ComparisonSet:
        """Every (i, j, p) replaced by (j, i, 1 - p)."""
        return ComparisonSet(self.universe, self.right.copy(), self.left.copy(), 1.0 - self.p)

    def head(self, k: int) -> ComparisonSet:
        return ComparisonSet(self.universe, self.left[:k].copy(), self.right[:k].copy(), self.p[:k].copy())

    @cached_property
    def appearances(self) -> np.ndarray:
        n = self.universe.N
        return np.bincount(self.left, minlength=n) + np.bincount(self.right, minlength=n)


class Gauge(enum.Enum):
    MEAN_ZERO = "mean-zero"
    RAW = "raw"


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Scores over an item universe, aligned with ``ids``.

    Fit diagnostics (``iterations``, ``converged``, ``warnings``) are carried
    along so the harness can write them into the score file header.
    """

    ids: tuple[str, ...]
    values: np.ndarray
    gauge: Gauge = Gauge.RAW
    method: str | None = None
    iterations: int = 0
    converged: bool = True
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        ids = tuple(self.ids)
        values = np.array(self.values, dtype=float).reshape(-1)
        if len(ids) != values.size:
            raise ValidationError(f"{len(ids)} ids but {values.size} values")
        if len(set(ids)) != len(ids):
            raise DuplicateIdError("score vector ids must be unique")
        if self.gauge is Gauge.MEAN_ZERO and values.size and abs(values.mean()) > MEAN_ZERO_TOL:
            raise ValidationError(f"mean-zero gauge violated: mean={values.mean():.3g}")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @classmethod
    def centered(cls, ids: Sequence[str], values: np.ndarray, **kwargs) -> ScoreVector:
        values = np.asarray(values, dtype=float)
        return cls(tuple(ids), values - values.mean(), Gauge.MEAN_ZERO, **kwargs)

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScoreVector):
            return NotImplemented
        return (self.ids == other.ids and np.array_equal(self.values, other.values)
                and (self.gauge, self.method, self.iterations, self.converged, self.warnings)
                == (other.gauge, other.method, other.iterations, other.converged, other.warnings))

    __hash__ = None

    def __getitem__(self, item_id: str) -> float:
        return float(self.values[self.ids.index(item_id)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, self.values.tolist()))

    def aligned(self, other: ScoreVector) -> tuple[np.ndarray, np.ndarray]:
        """Values of ``self`` and ``other`` restricted to shared ids, in ``self`` order."""
        pos = {k: n for n, k in enumerate(other.ids)}
        keep = [n for n, k in enumerate(self.ids) if k in pos]
        return self.values[keep], other.values[[pos[self.ids[n]] for n in keep]]


# -- connectivity / validation -------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    n_items: int
    n_comparisons: int
    covered: int
    uncovered: tuple[str, ...]
    n_components: int
    connected: bool
    components: tuple[tuple[str, ...], ...]
    duplicate_pairs: dict[tuple[str, str], int]

    @property
    def coverage(self) -> float:
        return self.covered / self.n_items if self.n_items else 0.0

    def summary(self) -> str:
        dup = sum(c - 1 for c in self.duplicate_pairs.values())
        return (f"{self.n_comparisons} comparisons, coverage {self.covered}/{self.n_items}, "
                f"{self.n_components} component(s), connected={self.connected}, "
                f"{dup} repeated judgment(s)")


def components_of(n: int, left: np.ndarray, right: np.ndarray) -> tuple[int, np.ndarray]:
    """Connected components of the undirected comparison graph on ``n`` nodes."""
    graph = coo_matrix((np.ones(left.size), (left, right)), shape=(n, n))
    return connected_components(graph, directed=False)


def validate(cset: ComparisonSet) -> ValidationReport:
    """Coverage, connectivity and duplicate statistics. Never mutates its input."""
    ids = cset.universe.ids
    n = len(ids)
    appear = cset.appearances
    uncovered = tuple(ids[k] for k in range(n) if appear[k] == 0)
    n_comp, labels = components_of(n, cset.left, cset.right)
    groups: dict[int, list[str]] = {}
    for k, lab in enumerate(labels.tolist()):
        groups.setdefault(lab, []).append(ids[k])
    counts = Counter(zip(cset.left.tolist(), cset.right.tolist()))
    dups = {(ids[a], ids[b]): c for (a, b), c in sorted(counts.items()) if c > 1}
    return ValidationReport(
        n_items=n,
        n_comparisons=len(cset),
        covered=n - len(uncovered),
        uncovered=uncovered,
        n_components=int(n_comp),
        connected=len(cset) > 0 and n_comp == 1,
        components=tuple(tuple(g) for g in groups.values()),
        duplicate_pairs=dups,
    )


# -- file formats ----------------------------------------------------------------


def _records(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed record: {exc.msg}", line=lineno) from None
            if not isinstance(rec, dict):
                raise ParseError("record must be a JSON object", line=lineno)
            yield lineno, rec


def load_items(path: str | Path) -> ItemSet:
    items = []
    seen: set[str] = set()
    for lineno, rec in _records(path):
        item_id = rec.get("id")
        text = rec.get("text")
        if not isinstance(item_id, str) or not item_id:
            raise ParseError("missing or non-string 'id'", line=lineno)
        if not isinstance(text, str):
            raise ParseError("missing or non-string 'text'", line=lineno)
        score = rec.get("score")
        if score is not None and (isinstance(score, bool) or not isinstance(score, (int, float))):
            raise ParseError("'score' must be a number", line=lineno)
        if item_id in seen:
            raise DuplicateIdError(f"line {lineno}: duplicate item id {item_id!r}")
        seen.add(item_id)
        try:
            items.append(Item(item_id, text, score))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    return ItemSet(items)


def save_items(items: ItemSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            rec: dict = {"id": item.id, "text": item.text}
            if item.gold_score is not None:
                rec["score"] = item.gold_score
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_comparisons(path: str | Path, universe: ItemSet) -> ComparisonSet:
    comps = []
    for lineno, rec in _records(path):
        i, j = rec.get("i"), rec.get("j")
        if not isinstance(i, str) or not isinstance(j, str):
            raise ParseError("'i' and 'j' must be strings", line=lineno)
        has_p, has_w = "p" in rec, "winner" in rec
        if has_p == has_w:
            raise ParseError("exactly one of 'p' or 'winner' is required", line=lineno)
        if has_w:
            winner = rec["winner"]
            if winner not in ("i", "j"):
                raise ParseError(f"winner must be 'i' or 'j', got {winner!r}", line=lineno)
            p = 1.0 if winner == "i" else 0.0
        else:
            p = rec["p"]
            if isinstance(p, bool) or not isinstance(p, (int, float)):
                raise ParseError("'p' must be a number", line=lineno)
        for k in (i, j):
            if k not in universe:
                raise UnknownIdError(f"line {lineno}: unknown item id {k!r}")
        try:
            comps.append(Comparison(i, j, p))
        except ValidationError as exc:
            raise type(exc)(f"line {lineno}: {exc}") from None
    return ComparisonSet.from_comparisons(universe, comps)


def save_comparisons(cset: ComparisonSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in cset:
            fh.write(json.dumps({"i": c.i, "j": c.j, "p": c.p}) + "\n")
