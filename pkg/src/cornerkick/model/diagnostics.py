"""Convergence diagnostics for multi-chain draws.

Rank-normalised split R-hat (the larger of the bulk and folded-tail values)
and bulk effective sample size from Geyer's initial monotone sequence.
Arrays are ``(chains, draws)``.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import norm, rankdata


def split_chains(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)


def _z_scale(x: np.ndarray) -> np.ndarray:
    ranks = rankdata(x, method="average").reshape(x.shape)
    return norm.ppf((ranks - 0.375) / (x.size + 0.25))


def _rhat(x: np.ndarray) -> float:
    m, n = x.shape
    chain_means = x.mean(axis=1)
    within = x.var(axis=1, ddof=1).mean()
    between = n * chain_means.var(ddof=1)
    if within == 0:
        return np.nan if between == 0 else np.inf
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def rhat(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2 and x.shape[1] < 4:
        return np.nan
    split = split_chains(x)
    if np.all(split == split.flat[0]):
        return np.nan
    bulk = _rhat(_z_scale(split))
    folded = _rhat(_z_scale(np.abs(split - np.median(split))))
    return max(bulk, folded)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    centred = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(centred, n=size, axis=-1)
    acov = np.fft.irfft(f * np.conjugate(f), n=size, axis=-1)[..., :n]
    return acov / n


def _ess(x: np.ndarray) -> float:
    m, n = x.shape
    acov = _autocov(x)
    chain_mean = x.mean(axis=1)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += chain_mean.var(ddof=1)
    if var_plus <= 0:
        return np.nan
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer: sum consecutive pairs while positive, enforce monotone decrease
    pairs = []
    t = 0
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p < 0:
            break
        pairs.append(p)
        t += 2
    pairs = np.minimum.accumulate(np.array(pairs)) if pairs else np.array([1.0])
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def ess(x: np.ndarray) -> float:
    """Bulk effective sample size."""
    x = np.asarray(x, dtype=float)
    split = split_chains(x)
    if np.all(split == split.flat[0]):
        return np.nan
    return _ess(_z_scale(split))


def summarize(draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-parameter (rhat, ess) for ``draws`` of shape (chains, draws, params)."""
    p = draws.shape[-1]
    r = np.array([rhat(draws[:, :, j]) for j in range(p)])
    e = np.array([ess(draws[:, :, j]) for j in range(p)])
    return r, e
