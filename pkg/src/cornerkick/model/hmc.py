"""Batched Hamiltonian Monte Carlo with a dense Euclidean metric.

All chains advance together so one vectorised density call serves every
chain. Each iteration integrates for a jittered time around pi/2 in whitened
units, which is the independence time for a Gaussian target; step sizes are
tuned per chain by dual averaging during warmup and the metric is re-estimated
once, halfway through warmup, from pooled warmup draws.

An optional jump move can follow each transition: a Metropolis step whose
proposal is a symmetric, volume-preserving map of the state. It lets chains
cross long flat ridges that fixed-length trajectories only random-walk along.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

LogDensityGrad = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
# (states, rng) -> proposals; must be symmetric with unit Jacobian
JumpProposal = Callable[[np.ndarray, np.random.Generator], np.ndarray]

MAX_STEPS = 128
DIVERGENCE = 1000.0


@dataclass
class HmcResult:
    samples: np.ndarray  # (chains, draws, params)
    step_size: np.ndarray
    accept_rate: np.ndarray
    divergences: np.ndarray
    metric: np.ndarray
    jump_accept_rate: np.ndarray | None = None


class DualAveraging:
    """Per-chain step-size adaptation (Hoffman and Gelman 2014)."""

    def __init__(self, step: np.ndarray, target: float = 0.8) -> None:
        self.mu = np.log(10.0 * step)
        self.target = target
        self.h_bar = np.zeros_like(step)
        self.log_step_bar = np.zeros_like(step)
        self.t = 0

    def update(self, accept: np.ndarray) -> np.ndarray:
        self.t += 1
        t = self.t
        w = 1.0 / (t + 10.0)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept)
        log_step = self.mu - np.sqrt(t) / 0.05 * self.h_bar
        eta = t**-0.75
        self.log_step_bar = eta * log_step + (1 - eta) * self.log_step_bar
        return np.exp(log_step)

    @property
    def final(self) -> np.ndarray:
        return np.exp(self.log_step_bar)


def _regularized_cov(x: np.ndarray) -> np.ndarray:
    n, p = x.shape
    cov = np.cov(x, rowvar=False).reshape(p, p)
    return (n / (n + 5.0)) * cov + 1e-3 * (5.0 / (n + 5.0)) * np.eye(p)


def sample(
    logp_grad: LogDensityGrad,
    inits: np.ndarray,
    n_warmup: int,
    n_draws: int,
    rng: np.random.Generator,
    metric: np.ndarray | None = None,
    target_accept: float = 0.8,
    jump: JumpProposal | None = None,
) -> HmcResult:
    x = np.array(inits, dtype=float)
    chains, dim = x.shape
    cov = np.eye(dim) if metric is None else np.array(metric, dtype=float)
    chol = np.linalg.cholesky(cov)

    lp, grad = logp_grad(x)
    if not np.all(np.isfinite(lp)):
        raise ValueError("initial points must have finite log density")
    step = np.full(chains, 0.5)
    adapt = DualAveraging(step, target_accept)

    samples = np.empty((chains, n_draws, dim))
    accepts = np.zeros(chains)
    divergences = np.zeros(chains, dtype=int)
    jump_accepts = np.zeros(chains)
    warm_hist = []
    remetric_at = n_warmup // 2 if n_warmup >= 200 else -1

    for it in range(n_warmup + n_draws):
        p0 = rng.standard_normal((chains, dim))
        q = np.linalg.solve(chol, x.T).T
        gq = grad @ chol
        h0 = -lp + 0.5 * np.sum(p0 * p0, axis=1)
        span = rng.uniform(0.6, 1.4) * np.pi / 2.0
        n_steps = np.clip(np.ceil(span / step).astype(int), 1, MAX_STEPS)

        p = p0.copy()
        q_new, lp_new, g_new, gq_new = q.copy(), lp.copy(), grad.copy(), gq.copy()
        for t in range(int(n_steps.max())):
            active = (t < n_steps)[:, None]
            p_half = p + 0.5 * step[:, None] * gq_new
            q_try = q_new + step[:, None] * p_half
            x_try = q_try @ chol.T
            lp_try, g_try = logp_grad(x_try)
            gq_try = g_try @ chol
            p_try = p_half + 0.5 * step[:, None] * gq_try
            p = np.where(active, p_try, p)
            q_new = np.where(active, q_try, q_new)
            lp_new = np.where(active[:, 0], lp_try, lp_new)
            g_new = np.where(active, g_try, g_new)
            gq_new = np.where(active, gq_try, gq_new)

        h1 = -lp_new + 0.5 * np.sum(p * p, axis=1)
        delta = h0 - h1
        delta = np.where(np.isfinite(delta), delta, -np.inf)
        accept_prob = np.exp(np.minimum(delta, 0.0))
        take = rng.random(chains) < accept_prob
        x = np.where(take[:, None], q_new @ chol.T, x)
        lp = np.where(take, lp_new, lp)
        grad = np.where(take[:, None], g_new, grad)

        if jump is not None:
            x_jump = jump(x, rng)
            lp_jump, g_jump = logp_grad(x_jump)
            log_ratio = np.where(np.isfinite(lp_jump), lp_jump - lp, -np.inf)
            hop = np.log(rng.random(chains)) < log_ratio
            x = np.where(hop[:, None], x_jump, x)
            lp = np.where(hop, lp_jump, lp)
            grad = np.where(hop[:, None], g_jump, grad)
            if it >= n_warmup:
                jump_accepts += hop

        if it < n_warmup:
            step = adapt.update(accept_prob)
            if n_warmup // 4 <= it < remetric_at:
                warm_hist.append(x.copy())
            if it + 1 == remetric_at and warm_hist:
                pooled = np.concatenate(warm_hist, axis=0)
                cov = _regularized_cov(pooled)
                chol = np.linalg.cholesky(cov)
                adapt = DualAveraging(step, target_accept)
            if it + 1 == n_warmup:
                step = adapt.final
        else:
            j = it - n_warmup
            samples[:, j] = x
            accepts += accept_prob
            divergences += (-delta > DIVERGENCE).astype(int)

    return HmcResult(
        samples=samples,
        step_size=step,
        accept_rate=accepts / max(n_draws, 1),
        divergences=divergences,
        metric=cov,
        jump_accept_rate=None if jump is None else jump_accepts / max(n_draws, 1),
    )
