"""Synthetic judges and seeded simulation trials.

Three judge families stand in for a comparative LLM:

* ``SoftCalibrated``: probabilities follow the sigmoid of the scaled score
  gap, as a model finetuned on soft targets would, plus Gaussian logit noise.
* ``HardDecision``: 0/1 decisions from the true order, each flipped with a
  fixed probability (a hard-finetuned model).
* ``Miscalibrated``: a soft judge with a constant logit bias (a zero-shot
  model whose probabilities do not follow the assumed distribution).

Every trial derives independent streams for scores, pair selection and judge
noise from one seed via :class:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .core import Comparison, ComparisonSet, ItemSet, ScoreVector
from .errors import ConfigurationError
from .metrics import MetricReport, evaluate
from .scoring import OptimizerConfig, ScoringMethod, score
from .selection import RandomK, SelectionStrategy, parse_k, shuffled_pairs, select_pairs, subset_prefix
from .targets import Link, apply_link, score_stddev

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SoftCalibrated:
    gamma_judge: float = 5.0
    logit_noise_sd: float = 0.0

    def __post_init__(self) -> None:
        if not (self.gamma_judge > 0 and math.isfinite(self.gamma_judge)):
            raise ConfigurationError("gamma_judge must be > 0")
        if not (self.logit_noise_sd >= 0 and math.isfinite(self.logit_noise_sd)):
            raise ConfigurationError("logit_noise_sd must be >= 0")


@dataclass(frozen=True)
class Miscalibrated(SoftCalibrated):
    logit_bias: float = 0.0

    def __post_init__(self) -> None:
        super().__post_init__()
        if not math.isfinite(self.logit_bias):
            raise ConfigurationError("logit_bias must be finite")


@dataclass(frozen=True)
class HardDecision:
    flip_prob: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.flip_prob < 0.5):
            raise ConfigurationError("flip_prob must lie in [0, 0.5)")


JudgeModel = Union[SoftCalibrated, Miscalibrated, HardDecision]


@dataclass(frozen=True)
class StandardNormal:
    pass


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ConfigurationError("Uniform needs hi > lo")


ScoreDistribution = Union[StandardNormal, Uniform]


def _draw_scores(n: int, dist: ScoreDistribution, rng: np.random.Generator) -> np.ndarray:
    if isinstance(dist, Uniform):
        return rng.uniform(dist.lo, dist.hi, size=n)
    return rng.standard_normal(n)


def sample_true_scores(n: int, dist: ScoreDistribution | None = None, seed=0) -> ScoreVector:
    if n < 2:
        raise ConfigurationError("need N >= 2")
    rng = np.random.default_rng(seed)
    values = _draw_scores(n, dist or StandardNormal(), rng)
    return ScoreVector(tuple(str(k) for k in range(n)), values)


def judge_probabilities(
    left: np.ndarray,
    right: np.ndarray,
    true_values: np.ndarray,
    model: JudgeModel,
    rng: np.random.Generator,
    sigma_s: float | None = None,
) -> np.ndarray:
    """Vectorised judge over index pairs; noise is drawn once per pair in order."""
    s_i = true_values[left]
    s_j = true_values[right]
    if isinstance(model, HardDecision):
        gap = s_i - s_j
        p = np.where(gap > 0, 1.0, np.where(gap < 0, 0.0, 0.5))
        if model.flip_prob > 0:
            flip = (rng.random(p.size) < model.flip_prob) & (p != 0.5)
            p = np.where(flip, 1.0 - p, p)
        return p
    if sigma_s is None:
        sigma_s = score_stddev(true_values)
    x = (s_i - s_j) / (model.gamma_judge * sigma_s)
    if isinstance(model, Miscalibrated):
        x = x + model.logit_bias
    if model.logit_noise_sd > 0:
        x = x + rng.normal(0.0, model.logit_noise_sd, size=x.size)
    return np.asarray(apply_link(x, Link.SIGMOID), dtype=float)


def simulate_judge(pair: tuple[int, int], true_scores: ScoreVector, model: JudgeModel,
                   rng: np.random.Generator) -> Comparison:
    i, j = pair
    p = judge_probabilities(np.array([i]), np.array([j]), true_scores.values, model, rng)
    return Comparison(true_scores.ids[i], true_scores.ids[j], float(p[0]))


@dataclass(frozen=True)
class TrialConfig:
    """One simulated experiment.

    The seeds inside ``strategy`` are ignored: selection draws from a stream
    derived from ``seed`` so that trials with different seeds see different pairs.
    """

    n: int
    judge: JudgeModel
    strategy: SelectionStrategy = field(default_factory=lambda: RandomK(200))
    method: ScoringMethod = ScoringMethod.POE_BT
    seed: int | tuple[int, ...] = 0
    true_score_dist: ScoreDistribution = field(default_factory=StandardNormal)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ConfigurationError("need N >= 2")
        object.__setattr__(self, "method", ScoringMethod.parse(self.method))


def trial_streams(seed) -> tuple[np.random.Generator, int, np.random.Generator]:
    """(score rng, integer selection seed, judge rng) derived from one seed."""
    entropy = list(seed) if isinstance(seed, (tuple, list)) else seed
    score_ss, sel_ss, judge_ss = np.random.SeedSequence(entropy).spawn(3)
    return (np.random.default_rng(score_ss), int(sel_ss.generate_state(1, np.uint64)[0]),
            np.random.default_rng(judge_ss))


def run_trial(cfg: TrialConfig) -> MetricReport:
    score_rng, sel_seed, judge_rng = trial_streams(cfg.seed)
    true = _draw_scores(cfg.n, cfg.true_score_dist, score_rng)
    strategy = cfg.strategy
    if hasattr(strategy, "seed"):
        strategy = dataclasses.replace(strategy, seed=sel_seed)
    pairs = select_pairs(cfg.n, strategy)
    p = judge_probabilities(pairs[:, 0], pairs[:, 1], true, cfg.judge, judge_rng)
    universe = ItemSet.from_scores(true)
    cset = ComparisonSet(universe, pairs[:, 0], pairs[:, 1], p)
    pred = score(cset, cfg.method, cfg.optimizer)
    report = evaluate(pred.values, true)
    extra = tuple(w for w in pred.warnings)
    if cfg.n == 2 and not any("small sample" in w for w in report.warnings):
        extra += ("small sample (n=2)",)
    if extra:
        report = dataclasses.replace(report, warnings=report.warnings + extra)
    return report


# -- efficiency curves ---------------------------------------------------------


@dataclass(frozen=True)
class CurveConfig:
    n: int
    judge: JudgeModel
    k_values: tuple[int, ...]
    methods: tuple[ScoringMethod, ...] = (ScoringMethod.POE_BT,)
    n_seeds: int = 10
    base_seed: int = 0
    true_score_dist: ScoreDistribution = field(default_factory=StandardNormal)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self) -> None:
        methods = tuple(ScoringMethod.parse(m) for m in self.methods)
        object.__setattr__(self, "methods", methods)
        if ScoringMethod.BT_HARD in methods and not isinstance(self.judge, HardDecision):
            raise ConfigurationError("method 'bt' needs a hard-decision judge; use poe-bt")
        ks = tuple(parse_k(k, self.n) for k in self.k_values)
        full = self.n * (self.n - 1)
        for k in ks:
            if not 1 <= k <= full:
                raise ConfigurationError(f"K={k} outside [1, {full}] for N={self.n}")
        object.__setattr__(self, "k_values", ks)
        if self.n_seeds < 1:
            raise ConfigurationError("n_seeds must be >= 1")


@dataclass(frozen=True)
class CurveRow:
    method: str
    k: int
    seed: int | str
    spearman: float
    pearson: float
    rmse_scaled: float


def _curve_seed(cfg: CurveConfig, index: int) -> list[CurveRow]:
    score_rng, sel_seed, judge_rng = trial_streams((cfg.base_seed, index))
    true = _draw_scores(cfg.n, cfg.true_score_dist, score_rng)
    order = shuffled_pairs(cfg.n, sel_seed)
    p_all = judge_probabilities(order[:, 0], order[:, 1], true, cfg.judge, judge_rng)
    universe = ItemSet.from_scores(true)
    rows = []
    for k in cfg.k_values:
        pairs = subset_prefix(order, k)
        cset = ComparisonSet(universe, pairs[:, 0], pairs[:, 1], p_all[:k])
        for method in cfg.methods:
            rep = evaluate(score(cset, method, cfg.optimizer).values, true)
            rows.append(CurveRow(method.value, k, index, rep.spearman, rep.pearson, rep.rmse_scaled))
    return rows


def run_curve(cfg: CurveConfig, jobs: int = 1) -> list[CurveRow]:
    """Per-seed rows plus one mean row per (method, K), sorted by (method, K, seed).

    Every seed uses nested prefixes of one shuffled pair order, so the comparisons
    at a smaller K are a subset of those at a larger K.
    """
    indices = range(cfg.n_seeds)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_curve_seed, [cfg] * cfg.n_seeds, indices))
    else:
        per_seed = [_curve_seed(cfg, t) for t in indices]
    rows = [r for block in per_seed for r in block]

    out: list[CurveRow] = []
    for method in sorted(cfg.methods, key=lambda m: m.value):
        for k in sorted(set(cfg.k_values)):
            cell = sorted((r for r in rows if r.method == method.value and r.k == k), key=lambda r: r.seed)
            out.extend(cell)
            out.append(CurveRow(method.value, k, "mean",
                                _mean([r.spearman for r in cell]),
                                _mean([r.pearson for r in cell]),
                                _mean([r.rmse_scaled for r in cell])))
    return out


def _mean(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(arr.mean()) if arr.size else float("nan")
