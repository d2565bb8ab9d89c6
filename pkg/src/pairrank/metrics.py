"""Spearman, Pearson and rmse after least-squares scaling."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .core import ScoreVector
from .errors import (
    DegenerateFitError,
    PairrankError,
    UndefinedCorrelationError,
    ValidationError,
)


def _pair(pred, gold) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pred, ScoreVector) and isinstance(gold, ScoreVector):
        x, y = pred.aligned(gold)
    else:
        x = np.asarray(pred, dtype=float).reshape(-1)
        y = np.asarray(gold, dtype=float).reshape(-1)
    if x.size != y.size:
        raise ValidationError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValidationError("need at least 2 paired values")
    return x, y


def pearson(pred, gold) -> float:
    x, y = _pair(pred, gold)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman(pred, gold) -> float:
    """Pearson correlation of average ranks (ties share the mean of their ranks)."""
    x, y = _pair(pred, gold)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def ols_fit(x, y) -> tuple[float, float]:
    """Slope and intercept minimising sum((a*x + b - y)^2)."""
    x, y = _pair(x, y)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise DegenerateFitError("cannot fit a line to constant predictions")
    a = float(xc @ (y - y.mean())) / sxx
    b = float(y.mean()) - a * float(x.mean())
    return a, b


def rmse_after_scaling(pred, gold) -> tuple[float, float, float]:
    """Return ``(rmse, a, b)`` where ``a*pred + b`` is the OLS fit to ``gold``.

    The rmse is in the units of ``gold``.
    """
    x, y = _pair(pred, gold)
    a, b = ols_fit(x, y)
    resid = a * x + b - y
    return math.sqrt(float(np.mean(resid * resid))), a, b


@dataclass(frozen=True)
class MetricReport:
    spearman: float
    pearson: float
    rmse_scaled: float
    calib_a: float
    calib_b: float
    n: int
    warnings: tuple[str, ...] = field(default=())

    @property
    def spearman_pct(self) -> float:
        return 100.0 * self.spearman

    @property
    def pearson_pct(self) -> float:
        return 100.0 * self.pearson

    def to_dict(self) -> dict:
        d = asdict(self)
        d["warnings"] = list(self.warnings)
        d["spearman_pct"] = self.spearman_pct
        d["pearson_pct"] = self.pearson_pct
        return d


def evaluate(pred, gold) -> MetricReport:
    """All three metrics; degenerate inputs give NaN entries plus a warning instead of raising."""
    x, y = _pair(pred, gold)
    warnings: list[str] = []
    nan = float("nan")
    rho = r = rmse = a = b = nan
    try:
        rho = spearman(x, y)
        r = pearson(x, y)
        rmse, a, b = rmse_after_scaling(x, y)
    except PairrankError as exc:
        warnings.append(f"degenerate metrics: {exc}")
    if x.size < 3:
        warnings.append(f"small sample (n={x.size}); correlations are +-1 or undefined")
    return MetricReport(rho, r, rmse, a, b, int(x.size), tuple(warnings))
