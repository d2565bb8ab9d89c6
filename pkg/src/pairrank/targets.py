"""Soft pairwise training targets derived from gold scores.

A gold score gap is mapped to a probability with a link function applied to
the gap in units of ``gamma * sigma_s``:

    p_ij = f((s_i - s_j) / (gamma * sigma_s)),   f in {sigmoid, normal CDF}

``gamma = 0`` is the hard-decision limit (1, 0, or 0.5 on ties). Larger gamma
pulls every target towards 0.5.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit, ndtr, xlogy

from .core import ItemSet
from .errors import ConfigurationError, DegenerateScaleError, ValidationError
from .selection import SelectionStrategy, SampledWithReplacement, select_pairs

BCE_EPS = 1e-12
DEFAULT_GAMMA = 5.0
GAMMA_GRID = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)


class Link(enum.Enum):
    SIGMOID = "sigmoid"
    PROBIT = "probit"


def apply_link(x, link: Link = Link.SIGMOID):
    """Evaluate the link so that ``f(x) + f(-x) == 1`` holds exactly in floating point.

    The link is only evaluated on ``|x|`` (values in [0.5, 1]); the negative
    side is ``1 - f(|x|)``, which is exact there.
    """
    x = np.asarray(x, dtype=float)
    f = expit if link is Link.SIGMOID else ndtr
    upper = f(np.abs(x))
    out = np.where(x >= 0, upper, 1.0 - upper)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TargetConfig:
    """``sigma_s=None`` means "compute from the supplied scores" (Auto)."""

    gamma: float = DEFAULT_GAMMA
    link: Link = Link.SIGMOID
    sigma_s: float | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ConfigurationError(f"gamma must be finite and >= 0, got {self.gamma}")
        if self.sigma_s is not None and not (np.isfinite(self.sigma_s) and self.sigma_s > 0):
            raise ConfigurationError(f"sigma_s must be > 0, got {self.sigma_s}")
        if isinstance(self.link, str):
            object.__setattr__(self, "link", Link(self.link))

    @property
    def hard(self) -> bool:
        return self.gamma == 0

    def resolve(self, scores: Sequence[float]) -> TargetConfig:
        if self.sigma_s is not None:
            return self
        return dataclasses.replace(self, sigma_s=score_stddev(scores))


def score_stddev(scores: Sequence[float]) -> float:
    """Population standard deviation (divide by N)."""
    s = np.asarray(scores, dtype=float)
    if s.size < 2:
        raise DegenerateScaleError("need at least 2 scores to compute a scale")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    sd = float(s.std())
    if not sd > 0:
        raise DegenerateScaleError("all scores are equal; the score scale is zero")
    return sd


def soft_targets(s_i, s_j, cfg: TargetConfig) -> np.ndarray:
    """Vectorised :func:`soft_target`."""
    s_i = np.asarray(s_i, dtype=float)
    s_j = np.asarray(s_j, dtype=float)
    if not (np.all(np.isfinite(s_i)) and np.all(np.isfinite(s_j))):
        raise ValidationError("scores must be finite")
    if cfg.hard:
        return np.sign(s_i - s_j) * 0.5 + 0.5
    if cfg.sigma_s is None:
        raise ConfigurationError("sigma_s is Auto; call cfg.resolve(scores) first")
    return np.asarray(apply_link((s_i - s_j) / (cfg.gamma * cfg.sigma_s), cfg.link))


def soft_target(s_i: float, s_j: float, cfg: TargetConfig) -> float:
    return float(soft_targets(s_i, s_j, cfg))


def soft_bce(y, y_hat):
    """Binary cross-entropy against a soft label; ``y_hat`` is clamped to [1e-12, 1-1e-12]."""
    y = np.asarray(y, dtype=float)
    y_hat = np.clip(np.asarray(y_hat, dtype=float), BCE_EPS, 1.0 - BCE_EPS)
    loss = -(xlogy(y, y_hat) + xlogy(1.0 - y, 1.0 - y_hat))
    return loss if loss.ndim else float(loss)


# -- training pair export ------------------------------------------------------


@dataclass(frozen=True)
class TrainingPair:
    id_i: str
    id_j: str
    text_i: str
    text_j: str
    target: float

    def to_record(self) -> dict:
        return dataclasses.asdict(self)


def build_training_pairs(
    items: ItemSet,
    cfg: TargetConfig,
    pairing: SelectionStrategy | None = None,
    rng_seed: int = 0,
) -> list[TrainingPair]:
    """One training pair per selected ordered pair, target from the gold-score gap.

    ``rng_seed`` replaces the seed of seeded pairing strategies. The default
    pairing samples 50,000 ordered pairs uniformly with replacement.
    """
    if pairing is None:
        pairing = SampledWithReplacement(k=50_000)
    if hasattr(pairing, "seed"):
        pairing = dataclasses.replace(pairing, seed=rng_seed)

    gold = [it.gold_score for it in items if it.gold_score is not None]
    cfg = cfg if cfg.hard else cfg.resolve(gold)

    pairs = select_pairs(items.N, pairing)
    used = np.unique(pairs)
    for k in used.tolist():
        if items[k].gold_score is None:
            raise ValidationError(f"item {items[k].id!r} has no gold score")

    scores = np.array([np.nan if it.gold_score is None else it.gold_score for it in items])
    targets = soft_targets(scores[pairs[:, 0]], scores[pairs[:, 1]], cfg)
    out = []
    for (a, b), t in zip(pairs.tolist(), targets.tolist()):
        out.append(TrainingPair(items[a].id, items[b].id, items[a].text, items[b].text, t))
    return out


def write_training_pairs(pairs: Iterable[TrainingPair], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_record(), ensure_ascii=False) + "\n")
            n += 1
    return n


# -- histograms ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rows(self):
        for lo, hi, c in zip(self.edges[:-1].tolist(), self.edges[1:].tolist(), self.counts.tolist()):
            yield lo, hi, c


def target_histogram(targets, bins: int = 20) -> Histogram:
    """Equal-width histogram over [0, 1]; the last bin includes 1.0."""
    if bins < 2:
        raise ConfigurationError("bins must be >= 2")
    t = np.asarray(targets, dtype=float).reshape(-1)
    if t.size and not np.all((t >= 0) & (t <= 1)):
        raise ValidationError("targets must lie in [0, 1]")
    counts, edges = np.histogram(t, bins=bins, range=(0.0, 1.0))
    return Histogram(edges, counts)
