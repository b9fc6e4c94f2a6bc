"""Bayesian corner-count regressions, sampling and LOO comparison."""
from cornerkick.model.loo import LooResult, compare, psis_loo
from cornerkick.model.regression import (
    Coefficients,
    Dataset,
    MapFit,
    MCMCConfig,
    ModelSpec,
    PosteriorDraws,
    fit_map,
    fit_mcmc,
    log_likelihood,
    log_posterior,
    log_posterior_grad,
    pointwise_loglik,
    posterior_predictive,
    predictive_pmf,
)

__all__ = [
    "Coefficients", "Dataset", "LooResult", "MapFit", "MCMCConfig", "ModelSpec", "PosteriorDraws",
    "compare", "fit_map", "fit_mcmc", "log_likelihood", "log_posterior", "log_posterior_grad",
    "pointwise_loglik", "posterior_predictive", "predictive_pmf", "psis_loo",
]
