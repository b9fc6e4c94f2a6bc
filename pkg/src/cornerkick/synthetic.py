"""Synthetic corner data with known coefficients, for calibration checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cornerkick import dcp
from cornerkick.dcp import Family
from cornerkick.model.regression import Dataset, ModelSpec

# location coefficients of the order fitted on real leagues
TRUE_BETA = np.array([0.75, 0.156, -0.001, -0.607, 0.593, 0.597, -0.002, -0.002])
TRUE_THETA = 0.9577
TRUE_KAPPA = 60.0


@dataclass(frozen=True)
class SyntheticSet:
    data: Dataset
    params: np.ndarray  # true parameter vector in ModelSpec.parameter_names order
    spec: ModelSpec


def covariates(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(X, Z) with realistic spreads for the eight location covariates."""
    tg = rng.uniform(1.8, 3.4, n)
    sup = rng.normal(0.0, 0.7, n)
    tc_target = rng.normal(np.log(10.0), 0.08, n)
    strength = 10.0 * np.exp(rng.normal(0.0, 0.2, (n, 2)))
    avg3 = rng.poisson(np.repeat(strength[:, :, None], 3, axis=2)).mean(axis=2)
    sog3 = rng.poisson(4.5, (n, 2, 3)).mean(axis=2)
    log_abs_sup = np.log(np.abs(sup) + 0.01)
    X = np.column_stack([
        np.ones(n), np.log(tg), log_abs_sup, tc_target,
        np.log(avg3[:, 0] + 0.01), np.log(avg3[:, 1] + 0.01),
        np.log(sog3[:, 0] + 0.01), np.log(sog3[:, 1] + 0.01),
    ])
    Z = np.column_stack([np.ones(n), log_abs_sup])
    return X, Z


def _draw_counts(family: Family, lam: np.ndarray, shape: np.ndarray | None, rng) -> np.ndarray:
    if family is Family.POISSON:
        return rng.poisson(lam)
    if family is Family.NEG_BINOMIAL:
        return rng.poisson(rng.gamma(shape, lam / shape))
    clusters = rng.poisson(lam)
    # sum of `clusters` zero-truncated geometrics = clusters + NegBin(clusters, theta) failures
    extra = np.zeros_like(clusters)
    pos = clusters > 0
    extra[pos] = rng.negative_binomial(clusters[pos], shape[pos])
    return clusters + extra


def simulate(n: int, seed: int, family: Family | str = Family.GEOM_POISSON,
             beta: np.ndarray = TRUE_BETA, shape: float | None = None,
             alpha: np.ndarray | None = None) -> SyntheticSet:
    """Draw covariates and counts from a known regression.

    With ``alpha`` given the shape follows the shape regression on
    ``z = log(|SUP| + 0.01)``; otherwise it is fixed at ``shape`` (or the
    family default).
    """
    family = Family.parse(family)
    rng = np.random.default_rng(seed)
    X, Z = covariates(n, rng)
    lam = np.exp(X @ beta)
    spec = ModelSpec(family, shape_regression=alpha is not None)
    if family is Family.POISSON:
        params, shp = np.array(beta, dtype=float), None
    elif alpha is not None:
        zeta = Z @ alpha
        shp = np.exp(zeta) if family is Family.NEG_BINOMIAL else 1.0 / (1.0 + np.exp(-zeta))
        params = np.concatenate([beta, alpha])
    else:
        value = shape if shape is not None else (TRUE_KAPPA if family is Family.NEG_BINOMIAL else TRUE_THETA)
        shp = np.full(n, value)
        link = np.log(value) if family is Family.NEG_BINOMIAL else np.log(value / (1 - value))
        params = np.append(beta, link)
    y = _draw_counts(family, lam, shp, rng)
    return SyntheticSet(Dataset(X, Z, y), params, spec)


def true_distribution(family: Family, lam: float, shape: float | None) -> dcp.DcpDistribution:
    if family is Family.POISSON:
        return dcp.DcpDistribution.poisson(lam)
    if family is Family.NEG_BINOMIAL:
        return dcp.DcpDistribution.neg_binomial(lam, shape)
    return dcp.DcpDistribution.geom_poisson(lam, shape)
