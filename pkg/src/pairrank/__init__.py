"""Pairwise comparative assessment: scoring, soft targets, simulation and an LLM judge harness."""

__version__ = "0.1.0"

from .core import Comparison, ComparisonSet, Gauge, Item, ItemSet, ScoreVector, load_comparisons, load_items, validate
from .metrics import MetricReport, evaluate, pearson, rmse_after_scaling, spearman
from .scoring import OptimizerConfig, ScoringMethod, score
from .targets import Link, TargetConfig, soft_bce, soft_target

__all__ = [
    "Comparison", "ComparisonSet", "Gauge", "Item", "ItemSet", "ScoreVector",
    "load_comparisons", "load_items", "validate",
    "MetricReport", "evaluate", "pearson", "rmse_after_scaling", "spearman",
    "OptimizerConfig", "ScoringMethod", "score",
    "Link", "TargetConfig", "soft_bce", "soft_target",
]
