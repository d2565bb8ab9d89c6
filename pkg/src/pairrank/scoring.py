"""Turning a comparison set into per-item scores.

The product-of-experts scorers maximise the penalised log-likelihood

    sum_k  p_k * log F(s_i - s_j) + (1 - p_k) * log(1 - F(s_i - s_j))  -  lam/2 * |s|^2

with ``F`` the sigmoid (PoE-BT; on binary ``p`` this is classical Bradley-Terry)
or the standard normal CDF (PoE-TM). Per-pair normalisers do not depend on the
scores and are dropped. The objective is concave; it is maximised with a
limited-memory quasi-Newton ascent and backtracking line search, and the result
is shifted to mean zero.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import expit, log_expit, log_ndtr

from .core import ComparisonSet, Gauge, ScoreVector, components_of
from .errors import ConfigurationError, MethodMismatchError, ValidationError
from .metrics import ols_fit

logger = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ScoringMethod(enum.Enum):
    WIN_RATIO = "win-ratio"
    AVG_PROB = "avg-prob"
    BT_HARD = "bt"
    POE_BT = "poe-bt"
    POE_TM = "poe-tm"

    @classmethod
    def parse(cls, value: str | ScoringMethod) -> ScoringMethod:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ConfigurationError(f"unknown scoring method {value!r} (expected one of {names})") from None


@dataclass(frozen=True)
class OptimizerConfig:
    """``init_seed=None`` starts from zeros; an integer seeds a random start."""

    max_iters: int = 2000
    grad_tol: float = 1e-8
    l2_lambda: float = 0.01
    init_seed: int | None = None

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be positive")
        if not (self.grad_tol > 0 and math.isfinite(self.grad_tol)):
            raise ConfigurationError("grad_tol must be a positive finite number")
        if not (self.l2_lambda >= 0 and math.isfinite(self.l2_lambda)):
            raise ConfigurationError("l2_lambda must be finite and >= 0")


# -- counting methods ----------------------------------------------------------


def _counting_scores(cset: ComparisonSet, left_credit: np.ndarray, name: str) -> ScoreVector:
    if len(cset) == 0:
        raise ValidationError("cannot score an empty comparison set")
    n = cset.universe.N
    credit = (np.bincount(cset.left, weights=left_credit, minlength=n)
              + np.bincount(cset.right, weights=1.0 - left_credit, minlength=n))
    appear = cset.appearances
    values = np.divide(credit, appear, out=np.zeros(n), where=appear > 0)
    warnings = ()
    if (appear == 0).any():
        missing = [cset.universe.ids[k] for k in np.flatnonzero(appear == 0)]
        msg = f"{len(missing)} item(s) never compared, scored 0: {missing[:5]}"
        logger.debug(msg)
        warnings = (msg,)
    return ScoreVector(cset.universe.ids, values, Gauge.RAW, method=name, warnings=warnings)


def win_ratio(cset: ComparisonSet) -> ScoreVector:
    """Fraction of comparisons won; p > 0.5 is a win, p == 0.5 half a win each."""
    wins = np.where(cset.p > 0.5, 1.0, np.where(cset.p < 0.5, 0.0, 0.5))
    return _counting_scores(cset, wins, ScoringMethod.WIN_RATIO.value)


def avg_prob(cset: ComparisonSet) -> ScoreVector:
    """Mean judged probability of winning over each item's comparisons."""
    return _counting_scores(cset, cset.p, ScoringMethod.AVG_PROB.value)


# -- objectives ----------------------------------------------------------------


def _scatter(n: int, left: np.ndarray, right: np.ndarray, r: np.ndarray) -> np.ndarray:
    return np.bincount(left, weights=r, minlength=n) - np.bincount(right, weights=r, minlength=n)


def bt_objective(left, right, p, s, l2_lambda: float) -> tuple[float, np.ndarray]:
    """Penalised PoE-BT log-likelihood and its gradient over index arrays."""
    d = s[left] - s[right]
    value = float(np.sum(p * log_expit(d) + (1.0 - p) * log_expit(-d)))
    value -= 0.5 * l2_lambda * float(s @ s)
    grad = _scatter(s.size, left, right, p - expit(d)) - l2_lambda * s
    return value, grad


def _normal_hazard(x: np.ndarray) -> np.ndarray:
    """phi(x) / Phi(x), stable in both tails."""
    return np.exp(-0.5 * x * x - _LOG_SQRT_2PI - log_ndtr(x))


def tm_objective(left, right, p, s, l2_lambda: float) -> tuple[float, np.ndarray]:
    """Penalised PoE-TM (probit expert) log-likelihood and its gradient."""
    d = s[left] - s[right]
    value = float(np.sum(p * log_ndtr(d) + (1.0 - p) * log_ndtr(-d)))
    value -= 0.5 * l2_lambda * float(s @ s)
    r = p * _normal_hazard(d) - (1.0 - p) * _normal_hazard(-d)
    grad = _scatter(s.size, left, right, r) - l2_lambda * s
    return value, grad


def _as_array(cset: ComparisonSet, s) -> np.ndarray:
    if isinstance(s, ScoreVector):
        if s.ids != cset.universe.ids:
            raise ValidationError("score vector ids must match the comparison universe")
        s = s.values
    s = np.asarray(s, dtype=float).reshape(-1)
    if s.size != cset.universe.N:
        raise ValidationError(f"expected {cset.universe.N} scores, got {s.size}")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    return s


def poe_bt_loglik_grad(cset: ComparisonSet, s, l2_lambda: float = 0.0) -> tuple[float, dict[str, float]]:
    value, grad = bt_objective(cset.left, cset.right, cset.p, _as_array(cset, s), l2_lambda)
    return value, dict(zip(cset.universe.ids, grad.tolist()))


def poe_tm_loglik_grad(cset: ComparisonSet, s, l2_lambda: float = 0.0) -> tuple[float, dict[str, float]]:
    value, grad = tm_objective(cset.left, cset.right, cset.p, _as_array(cset, s), l2_lambda)
    return value, dict(zip(cset.universe.ids, grad.tolist()))


# -- optimiser -----------------------------------------------------------------


@dataclass(frozen=True)
class AscentResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool


def maximize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    max_iters: int = 2000,
    grad_tol: float = 1e-8,
    memory: int = 10,
) -> AscentResult:
    """L-BFGS ascent with backtracking (Armijo) line search.

    Stops once the infinity norm of the gradient is at most ``grad_tol``.
    Close to the optimum the objective can be flat to rounding error; a step
    is then accepted if it shrinks the directional derivative instead.
    """
    c1 = 1e-4
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    hist: deque[tuple[np.ndarray, np.ndarray, float]] = deque(maxlen=memory)
    it = 0
    for it in range(max_iters):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= grad_tol:
            return AscentResult(x, f, gnorm, it, True)

        # two-loop recursion on the negated problem
        q = -g
        alphas = []
        for s_k, y_k, rho_k in reversed(hist):
            a = rho_k * float(s_k @ q)
            alphas.append(a)
            q = q - a * y_k
        if hist:
            s_k, y_k, _ = hist[-1]
            q = q * (float(s_k @ y_k) / float(y_k @ y_k))
        else:
            q = q * min(1.0, 1.0 / gnorm)
        for (s_k, y_k, rho_k), a in zip(hist, reversed(alphas)):
            b = rho_k * float(y_k @ q)
            q = q + (a - b) * s_k
        direction = -q

        slope = float(g @ direction)
        if not slope > 0:
            hist.clear()
            direction = g * min(1.0, 1.0 / gnorm)
            slope = float(g @ direction)

        t = 1.0
        flat = 4.0 * np.finfo(float).eps * (1.0 + abs(f))
        while True:
            x_new = x + t * direction
            f_new, g_new = fun(x_new)
            if math.isfinite(f_new):
                if f_new >= f + c1 * t * slope:
                    break
                if abs(f_new - f) <= flat and abs(float(g_new @ direction)) <= 0.9 * slope:
                    break
            t *= 0.5
            if t < 1e-20:
                break
        if t < 1e-20:
            if hist:
                hist.clear()
                continue
            return AscentResult(x, f, gnorm, it, False)

        s_vec = x_new - x
        y_vec = g - g_new
        sy = float(s_vec @ y_vec)
        if sy > 1e-12 * float(y_vec @ y_vec) and sy > 0:
            hist.append((s_vec, y_vec, 1.0 / sy))
        x, f, g = x_new, f_new, g_new

    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return AscentResult(x, f, gnorm, max_iters, gnorm <= grad_tol)


def is_separated(cset: ComparisonSet) -> bool:
    """True when some group of items never loses to the rest of its component.

    In that case the unpenalised likelihood has no finite maximiser.
    """
    n = cset.universe.N
    fwd = cset.p > 0.0  # left won some mass
    bwd = cset.p < 1.0  # right won some mass
    rows = np.concatenate([cset.left[fwd], cset.right[bwd]])
    cols = np.concatenate([cset.right[fwd], cset.left[bwd]])
    graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    n_strong, _ = connected_components(graph, directed=True, connection="strong")
    n_weak, _ = components_of(n, cset.left, cset.right)
    return n_strong > n_weak


def _fit(cset: ComparisonSet, cfg: OptimizerConfig, objective, method: ScoringMethod) -> ScoreVector:
    n = cset.universe.N
    if n < 2:
        raise ValidationError("need at least 2 items to score")
    if cfg.init_seed is None:
        x0 = np.zeros(n)
    else:
        x0 = np.random.default_rng(cfg.init_seed).standard_normal(n)
        x0 -= x0.mean()

    lam = cfg.l2_lambda
    left, right, p = cset.left, cset.right, cset.p
    res = maximize(lambda s: objective(left, right, p, s, lam), x0, cfg.max_iters, cfg.grad_tol)

    warnings: list[str] = []
    converged = res.converged
    if not res.converged:
        warnings.append(f"not converged after {res.iterations} iterations (|grad|_inf={res.grad_norm:.3g})")
    if lam == 0 and is_separated(cset):
        converged = False
        warnings.append("perfect separation with l2_lambda=0: the maximiser diverges, score gaps are arbitrary")
    n_comp, _ = components_of(n, left, right)
    if n_comp > 1:
        warnings.append(f"comparison graph has {n_comp} components; scores are only comparable within a component")
    for w in warnings:
        logger.debug("%s: %s", method.value, w)
    return ScoreVector.centered(cset.universe.ids, res.x, method=method.value,
                                iterations=res.iterations, converged=converged,
                                warnings=tuple(warnings))


def poe_bt_score(cset: ComparisonSet, cfg: OptimizerConfig | None = None) -> ScoreVector:
    return _fit(cset, cfg or OptimizerConfig(), bt_objective, ScoringMethod.POE_BT)


def bt_hard_score(cset: ComparisonSet, cfg: OptimizerConfig | None = None) -> ScoreVector:
    """Classical Bradley-Terry MLE (L2-penalised); requires hard decisions."""
    if not cset.is_binary():
        raise MethodMismatchError("hard Bradley-Terry needs p in {0, 1}; use poe-bt for soft probabilities")
    return _fit(cset, cfg or OptimizerConfig(), bt_objective, ScoringMethod.BT_HARD)


def poe_tm_score(cset: ComparisonSet, cfg: OptimizerConfig | None = None) -> ScoreVector:
    return _fit(cset, cfg or OptimizerConfig(), tm_objective, ScoringMethod.POE_TM)


def linear_calibrate(pred: ScoreVector, gold: ScoreVector) -> tuple[float, float]:
    """OLS ``(a, b)`` mapping ``pred`` onto ``gold`` over their shared ids."""
    x, y = pred.aligned(gold)
    return ols_fit(x, y)


def score(cset: ComparisonSet, method: ScoringMethod | str, cfg: OptimizerConfig | None = None) -> ScoreVector:
    method = ScoringMethod.parse(method)
    if method is ScoringMethod.WIN_RATIO:
        return win_ratio(cset)
    if method is ScoringMethod.AVG_PROB:
        return avg_prob(cset)
    if method is ScoringMethod.BT_HARD:
        return bt_hard_score(cset, cfg)
    if method is ScoringMethod.POE_BT:
        return poe_bt_score(cset, cfg)
    return poe_tm_score(cset, cfg)
