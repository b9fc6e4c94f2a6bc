"""Pareto-smoothed importance-sampling leave-one-out cross-validation.

For observation i the raw importance ratios over posterior draws are
``1 / p(y_i | theta_s)``. The largest 20% of them are replaced by expected
order statistics of a generalized Pareto fitted to their exceedances by
probability-weighted moments, and capped at the largest raw ratio.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

TAIL_FRACTION = 0.2
K_GOOD = 0.5
K_BAD = 0.7
MIN_DRAWS = 1000


@dataclass(frozen=True)
class LooResult:
    elpd_loo: float
    p_loo: float
    pointwise: np.ndarray
    pareto_k: np.ndarray
    se: float
    se_diff: float = 0.0
    elpd_diff: float = 0.0

    @property
    def n_high_k(self) -> int:
        return int(np.sum(self.pareto_k > K_GOOD))

    @property
    def n_bad_k(self) -> int:
        return int(np.sum(self.pareto_k > K_BAD))


def gpd_fit_pwm(x: np.ndarray) -> tuple[float, float]:
    """(shape k, scale sigma) of a generalized Pareto with location 0.

    Probability-weighted moment estimator; ``x`` need not be sorted.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n < 5:
        raise ValueError("too few exceedances")
    a0 = x.mean()
    p = (np.arange(1, n + 1) - 0.35) / n
    a1 = np.mean((1.0 - p) * x)
    denom = a0 - 2.0 * a1
    if not (a0 > 0 and denom > 0 and math.isfinite(a0)):
        raise ValueError("degenerate exceedances")
    # estimator for the (1 - k y / sigma)^(1/k) form; heavy tails have k < 0 there
    k_hw = a0 / denom - 2.0
    sigma = 2.0 * a0 * a1 / denom
    return -k_hw, sigma


def gpd_quantile(prob: np.ndarray, k: float, sigma: float) -> np.ndarray:
    if abs(k) < 1e-12:
        return -sigma * np.log1p(-prob)
    return sigma * np.expm1(-k * np.log1p(-prob)) / k


def psis_smooth(log_ratios: np.ndarray) -> tuple[np.ndarray, float]:
    """Smoothed log weights (unnormalised) and the Pareto shape estimate."""
    lw = np.asarray(log_ratios, dtype=float).copy()
    s = lw.size
    m_tail = int(math.ceil(TAIL_FRACTION * s))
    order = np.argsort(lw, kind="stable")
    tail_idx = order[s - m_tail:]
    cutoff = lw[order[s - m_tail - 1]]
    lmax = lw.max()
    # work on the exp scale relative to the max for numerical safety
    tail = np.exp(lw[tail_idx] - lmax)
    thresh = math.exp(cutoff - lmax)
    exceed = tail - thresh
    try:
        k, sigma = gpd_fit_pwm(exceed)
        if not (math.isfinite(k) and math.isfinite(sigma) and sigma > 0):
            raise ValueError("bad fit")
    except ValueError:
        return lw, math.inf
    probs = (np.arange(1, m_tail + 1) - 0.5) / m_tail
    smoothed = thresh + gpd_quantile(probs, k, sigma)
    smoothed = np.minimum(smoothed, 1.0)  # never exceed the largest raw ratio
    with np.errstate(divide="ignore"):
        lw[tail_idx] = np.log(smoothed) + lmax
    return lw, float(k)


def psis_loo(loglik: np.ndarray, reference: "LooResult | None" = None,
             min_draws: int = MIN_DRAWS) -> LooResult:
    """PSIS-LOO from a (draws x observations) log-likelihood matrix."""
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2:
        raise ValueError("loglik must be (draws, observations)")
    s, n = ll.shape
    if s < min_draws:
        raise ValueError(f"need at least {min_draws} draws, got {s}")
    pointwise = np.empty(n)
    ks = np.empty(n)
    lpd = logsumexp(ll, axis=0) - math.log(s)
    for i in range(n):
        lw, k = psis_smooth(-ll[:, i])
        ks[i] = k
        pointwise[i] = logsumexp(lw + ll[:, i]) - logsumexp(lw)
    elpd = float(pointwise.sum())
    se = float(math.sqrt(n * pointwise.var())) if n > 1 else 0.0
    result = LooResult(elpd, float(np.sum(lpd - pointwise)), pointwise, ks, se)
    if reference is not None:
        result = with_reference(result, reference)
    return result


def with_reference(result: LooResult, reference: LooResult) -> LooResult:
    """Attach elpd difference and its standard error against ``reference``."""
    if reference.pointwise.shape != result.pointwise.shape:
        raise ValueError("models must be scored on the same observations")
    diff = result.pointwise - reference.pointwise
    n = diff.size
    se_diff = float(math.sqrt(n * diff.var())) if n > 1 else 0.0
    return LooResult(result.elpd_loo, result.p_loo, result.pointwise, result.pareto_k,
                     result.se, se_diff, float(diff.sum()))


def compare(results: Mapping[str, LooResult]) -> list[tuple[str, LooResult]]:
    """Rank models by elpd_loo, each annotated relative to the best."""
    ranked = sorted(results.items(), key=lambda kv: kv[1].elpd_loo, reverse=True)
    best = ranked[0][1]
    return [(name, with_reference(res, best)) for name, res in ranked]


def format_table(rows: list[tuple[str, LooResult]]) -> str:
    lines = [f"{'model':<32}{'elpd_loo':>12}{'p_loo':>9}{'elpd_diff':>11}{'se_diff':>9}{'k>0.5':>7}"]
    for name, r in rows:
        lines.append(f"{name:<32}{r.elpd_loo:>12.1f}{r.p_loo:>9.1f}{r.elpd_diff:>11.1f}{r.se_diff:>9.1f}{r.n_high_k:>7d}")
    return "\n".join(lines)
