"""Compound Poisson regressions for match corner totals.

Location: ``log lam_i = X_i @ beta`` with the eight-column design of
:class:`cornerkick.features.FeatureRow`. For the geometric-Poisson family
``lam_i`` is the cluster rate, so the expected count is ``lam_i / theta_i``.

Shape, when the family has one, is either a single fixed value (``log kappa``
or ``logit theta`` as the free parameter) or a regression
``log kappa_i = alpha0 + alpha1 * z_i`` / ``logit theta_i = alpha0 + alpha1 * z_i``
on the shape covariate ``z_i = log(|SUP_i| + 0.01)``.

Every free parameter gets an independent Normal(0, prior_scale**2) prior.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.special import digamma, expit, gammaln

from cornerkick import dcp
from cornerkick.dcp import Family
from cornerkick.features import FeatureRow
from cornerkick.model import diagnostics, hmc

N_BETA = 8
RHAT_WARN = 1.05
DEFAULT_PRIOR_SCALE = 5.0


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    family: Family
    shape_regression: bool = False
    prior_scale: float = DEFAULT_PRIOR_SCALE

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.shape_regression and self.family is Family.POISSON:
            raise ValueError("Poisson has no shape parameter to regress")
        if not self.prior_scale > 0:
            raise ValueError("prior_scale must be positive")

    @property
    def n_shape(self) -> int:
        if self.family is Family.POISSON:
            return 0
        return 2 if self.shape_regression else 1

    @property
    def n_params(self) -> int:
        return N_BETA + self.n_shape

    @property
    def parameter_names(self) -> list[str]:
        names = [f"beta{j}" for j in range(N_BETA)]
        if self.shape_regression:
            names += ["alpha0", "alpha1"]
        elif self.family is Family.NEG_BINOMIAL:
            names.append("log_kappa")
        elif self.family is Family.GEOM_POISSON:
            names.append("logit_theta")
        return names

    @property
    def label(self) -> str:
        base = {Family.POISSON: "Poisson", Family.NEG_BINOMIAL: "Negative binomial",
                Family.GEOM_POISSON: "Geometric-Poisson"}[self.family]
        return base + (" + shape reg" if self.shape_regression else "")

    def to_dict(self) -> dict:
        return {"family": self.family.value, "shape_regression": self.shape_regression,
                "prior_scale": self.prior_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(Family.parse(d["family"]), bool(d["shape_regression"]), float(d["prior_scale"]))


@dataclass(frozen=True)
class Coefficients:
    beta: np.ndarray
    alpha: np.ndarray | None = None
    fixed_shape: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if self.beta.shape != (N_BETA,):
            raise ValueError(f"beta needs {N_BETA} entries")
        if self.alpha is not None:
            object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))

    def to_vector(self, spec: ModelSpec) -> np.ndarray:
        if spec.shape_regression:
            if self.alpha is None:
                raise ValueError("shape regression needs alpha")
            return np.concatenate([self.beta, self.alpha])
        if spec.family is Family.POISSON:
            return self.beta.copy()
        if self.fixed_shape is None:
            raise ValueError(f"{spec.family.value} needs a fixed shape")
        if spec.family is Family.NEG_BINOMIAL:
            if not self.fixed_shape > 0:
                raise ValueError("kappa must be positive")
            return np.append(self.beta, math.log(self.fixed_shape))
        if not 0 < self.fixed_shape < 1:
            raise ValueError("theta must lie in (0, 1)")
        return np.append(self.beta, math.log(self.fixed_shape) - math.log1p(-self.fixed_shape))

    @classmethod
    def from_vector(cls, vec: np.ndarray, spec: ModelSpec) -> "Coefficients":
        vec = np.asarray(vec, dtype=float)
        beta = vec[:N_BETA]
        if spec.shape_regression:
            return cls(beta, alpha=vec[N_BETA:N_BETA + 2])
        if spec.family is Family.NEG_BINOMIAL:
            return cls(beta, fixed_shape=float(np.exp(vec[N_BETA])))
        if spec.family is Family.GEOM_POISSON:
            return cls(beta, fixed_shape=float(expit(vec[N_BETA])))
        return cls(beta)


class Dataset:
    """Design matrices and counts, with the GP k-sum tables precomputed."""

    def __init__(self, X: np.ndarray, Z: np.ndarray, y: np.ndarray) -> None:
        self.X = np.ascontiguousarray(X, dtype=float)
        self.Z = np.ascontiguousarray(Z, dtype=float)
        self.y = np.asarray(y, dtype=np.int64)
        n = self.y.size
        if self.X.shape != (n, N_BETA) or self.Z.shape != (n, 2):
            raise ValueError("X must be (n, 8) and Z (n, 2)")
        if n == 0:
            raise ValueError("data must be nonempty")
        if np.any(self.y < 0):
            raise ValueError("counts must be nonnegative")
        self._gp = None
        self._poly = None

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[FeatureRow, int]]) -> "Dataset":
        X = np.array([r.design() for r, _ in rows])
        Z = np.array([r.shape_design() for r, _ in rows])
        y = np.array([c for _, c in rows])
        return cls(X.reshape(-1, N_BETA), Z.reshape(-1, 2), y)

    def __len__(self) -> int:
        return self.y.size

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Z[idx], self.y[idx])

    @property
    def gp_tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(base, k, positive) with y = 0 rows given a harmless dummy term."""
        if self._gp is None:
            kmax = max(int(self.y.max()), 1)
            base, k = dcp.gp_log_terms(self.y, kmax)
            positive = self.y >= 1
            base = base.copy()
            base[~positive, 0] = 0.0
            self._gp = (base, k.astype(float), positive)
        return self._gp

    @property
    def gp_poly(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Polynomial coefficients exp(base_k) and k exp(base_k), lowest power first."""
        if self._poly is None:
            base, k, positive = self.gp_tables
            c = np.where(positive[:, None], np.exp(base), 0.0)
            self._poly = (c, c * k, positive)
        return self._poly


def _split(params: np.ndarray, spec: ModelSpec, data: Dataset) -> tuple[np.ndarray, np.ndarray | None]:
    """Linear predictors (eta for log lam, zeta for the shape link), batched."""
    eta = params[:, :N_BETA] @ data.X.T
    if spec.family is Family.POISSON:
        return eta, None
    if spec.shape_regression:
        zeta = params[:, N_BETA:N_BETA + 2] @ data.Z.T
    else:
        zeta = np.broadcast_to(params[:, N_BETA:N_BETA + 1], eta.shape)
    return eta, zeta


def _pointwise(params: np.ndarray, spec: ModelSpec, data: Dataset, need_grad: bool):
    """Per-observation log-likelihood and its derivatives in eta and zeta."""
    eta, zeta = _split(params, spec, data)
    y = data.y.astype(float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        lam = np.exp(eta)
        if spec.family is Family.POISSON:
            ll = y * eta - lam - gammaln(y + 1)
            return ll, (y - lam if need_grad else None), None

        if spec.family is Family.NEG_BINOMIAL:
            kappa = np.exp(zeta)
            log_denom = np.logaddexp(eta, zeta)
            ll = (gammaln(y + kappa) - gammaln(kappa) - gammaln(y + 1)
                  + y * (eta - log_denom) + kappa * (zeta - log_denom))
            if not need_grad:
                return ll, None, None
            ratio = (y + kappa) / (lam + kappa)
            d_eta = kappa * (y - lam) / (lam + kappa)
            d_zeta = kappa * (digamma(y + kappa) - digamma(kappa) + zeta + 1.0 - log_denom - ratio)
            return ll, d_eta, d_zeta

        theta = expit(zeta)
        inner, ek = _gp_ksum(eta + zeta, data)
        ll = -lam + y * -np.logaddexp(0.0, zeta) + inner  # log(1 - theta) = -softplus(zeta)
        if not need_grad:
            return ll, None, None
        return ll, -lam + ek, ek - y * theta


def _gp_ksum(slope: np.ndarray, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """log sum_k c_k t^k and the weighted mean of k, with t = exp(slope).

    Horner evaluation of the polynomial is several times cheaper than a
    log-sum-exp over k; rows where it over- or underflows are redone in log space.
    """
    coef, kcoef, positive = data.gp_poly
    t = np.exp(slope)
    poly = np.zeros_like(t)
    dpoly = np.zeros_like(t)
    for j in range(coef.shape[1] - 1, -1, -1):
        poly = poly * t + coef[:, j]
        dpoly = dpoly * t + kcoef[:, j]
    # both sums still miss one factor of t, which cancels in the ratio
    inner = np.log(poly) + slope
    ek = dpoly / poly
    bad = positive & ~(np.isfinite(inner) & np.isfinite(ek) & (poly > 0))
    if bad.any():
        base, k, _ = data.gp_tables
        rows = np.nonzero(bad)
        z = base[rows[-1]] + k * slope[rows][:, None]
        zmax = z.max(axis=-1, keepdims=True)
        w = np.exp(z - zmax)
        wsum = w.sum(axis=-1)
        inner[rows] = zmax[:, 0] + np.log(wsum)
        ek[rows] = (w * k).sum(axis=-1) / wsum
    inner = np.where(positive, inner, 0.0)
    ek = np.where(positive, ek, 0.0)
    return inner, ek


def _prior(params: np.ndarray, spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    s2 = spec.prior_scale**2
    lp = -0.5 * np.sum(params**2, axis=1) / s2 - params.shape[1] * math.log(spec.prior_scale * math.sqrt(2 * math.pi))
    return lp, -params / s2


def _chain_rule(d_eta, d_zeta, spec: ModelSpec, data: Dataset) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        g = d_eta @ data.X
        if spec.family is Family.POISSON:
            return g
        if spec.shape_regression:
            return np.concatenate([g, d_zeta @ data.Z], axis=1)
        return np.concatenate([g, d_zeta.sum(axis=1, keepdims=True)], axis=1)


def log_posterior_and_grad(params: np.ndarray, spec: ModelSpec, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Batched log posterior and gradient; ``params`` is (batch, n_params).

    Non-finite values come back as ``-inf`` with a zero gradient.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    ll, d_eta, d_zeta = _pointwise(params, spec, data, need_grad=True)
    lp_prior, g_prior = _prior(params, spec)
    lp = ll.sum(axis=1) + lp_prior
    grad = _chain_rule(d_eta, d_zeta, spec, data) + g_prior
    bad = ~np.isfinite(lp) | ~np.all(np.isfinite(grad), axis=1)
    lp = np.where(bad, -np.inf, lp)
    grad = np.where(bad[:, None], 0.0, grad)
    return lp, grad


def _vector(coef, spec: ModelSpec) -> np.ndarray:
    return coef.to_vector(spec) if isinstance(coef, Coefficients) else np.asarray(coef, dtype=float)


def _as_dataset(data) -> Dataset:
    return data if isinstance(data, Dataset) else Dataset.from_rows(data)


def log_likelihood(data, coef: Coefficients | np.ndarray, spec: ModelSpec) -> float:
    data = _as_dataset(data)
    ll, _, _ = _pointwise(_vector(coef, spec)[None, :], spec, data, need_grad=False)
    total = float(ll.sum())
    if not math.isfinite(total):
        raise DataError("non-finite log-likelihood; check the linear predictor")
    return total


def log_posterior(data, coef: Coefficients | np.ndarray, spec: ModelSpec) -> float:
    vec = _vector(coef, spec)
    return log_likelihood(data, vec, spec) + float(_prior(vec[None, :], spec)[0][0])


def log_posterior_grad(data, coef: Coefficients | np.ndarray, spec: ModelSpec) -> np.ndarray:
    _, g = log_posterior_and_grad(_vector(coef, spec)[None, :], spec, _as_dataset(data))
    return g[0]


# -- fitting -----------------------------------------------------------------


@dataclass
class MapFit:
    coefficients: Coefficients
    vector: np.ndarray
    log_posterior: float
    converged: bool
    message: str
    covariance: np.ndarray | None = None


def _hessian(vec: np.ndarray, spec: ModelSpec, data: Dataset, h: float = 1e-5) -> np.ndarray:
    p = vec.size
    pts = np.repeat(vec[None, :], 2 * p, axis=0)
    for j in range(p):
        pts[2 * j, j] += h
        pts[2 * j + 1, j] -= h
    _, g = log_posterior_and_grad(pts, spec, data)
    hess = np.stack([(g[2 * j] - g[2 * j + 1]) / (2 * h) for j in range(p)])
    return 0.5 * (hess + hess.T)


def laplace_covariance(vec: np.ndarray, spec: ModelSpec, data: Dataset) -> np.ndarray:
    """Inverse negative Hessian, with eigenvalues floored to keep it positive definite."""
    neg_h = -_hessian(vec, spec, data)
    vals, vecs = np.linalg.eigh(neg_h)
    vals = np.maximum(vals, 1.0 / spec.prior_scale**2)
    return (vecs / vals) @ vecs.T


def fit_map(data, spec: ModelSpec, init: np.ndarray | None = None) -> MapFit:
    """Posterior mode by L-BFGS from the zero vector (or ``init``)."""
    data = _as_dataset(data)
    x0 = np.zeros(spec.n_params) if init is None else np.asarray(init, dtype=float)

    def objective(v):
        lp, g = log_posterior_and_grad(v[None, :], spec, data)
        if not np.isfinite(lp[0]):
            return 1e300, np.zeros_like(v)
        return -lp[0], -g[0]

    res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B",
                            options={"maxiter": 5000, "ftol": 1e-14, "gtol": 1e-8})
    start_val = -objective(x0)[0]
    vec, val = (res.x, -res.fun) if -res.fun >= start_val else (x0, start_val)
    grad_norm = float(np.max(np.abs(objective(vec)[1])))
    converged = bool(res.success or grad_norm < 1e-4)
    cov = laplace_covariance(vec, spec, data)
    return MapFit(Coefficients.from_vector(vec, spec), vec, float(val), converged, str(res.message), cov)


@dataclass
class MCMCConfig:
    chains: int = 4
    iterations: int = 4000
    warmup: int | None = None
    seed: int = 0
    target_accept: float = 0.8

    @property
    def n_warmup(self) -> int:
        return self.iterations // 2 if self.warmup is None else self.warmup


@dataclass
class PosteriorDraws:
    draws: np.ndarray  # (chains, iterations, params)
    spec: ModelSpec
    rhat: np.ndarray
    ess: np.ndarray
    warnings: list[str] = field(default_factory=list)
    sampler_info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.draws.ndim != 3 or self.draws.shape[2] != self.spec.n_params:
            raise ValueError("draws must be (chains, iterations, n_params)")

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[2])

    @property
    def chain_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_chains), self.draws.shape[1])

    def interval(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        tail = (1 - level) / 2 * 100
        return np.percentile(self.flat, tail, axis=0), np.percentile(self.flat, 100 - tail, axis=0)

    def median(self) -> np.ndarray:
        return np.median(self.flat, axis=0)

    def summary(self) -> dict[str, dict[str, float]]:
        lo, hi = self.interval()
        med = self.median()
        return {
            name: {"median": float(med[j]), "q2.5": float(lo[j]), "q97.5": float(hi[j]),
                   "rhat": float(self.rhat[j]), "ess": float(self.ess[j])}
            for j, name in enumerate(self.spec.parameter_names)
        }

    @classmethod
    def point(cls, vec: np.ndarray, spec: ModelSpec) -> "PosteriorDraws":
        """A one-draw posterior, for MAP-based prediction."""
        p = spec.n_params
        return cls(np.asarray(vec, dtype=float).reshape(1, 1, p), spec,
                   np.full(p, np.nan), np.full(p, np.nan), ["point estimate, not a posterior sample"])


def dispersion_warning(data: Dataset, spec: ModelSpec) -> str | None:
    if spec.family is Family.POISSON:
        return None
    y = data.y.astype(float)
    s2 = y.var(ddof=1) if y.size > 1 else 0.0
    if not s2 > y.mean():
        return (f"sample variance {s2:.4g} <= mean {y.mean():.4g} (s^2 > ybar violated): "
                "the shape parameter is not identified and drifts toward its Poisson limit")
    return None


JUMP_SCALES = (1.0, 4.0, 16.0)


def shape_jump(spec: ModelSpec, data: Dataset, cov: np.ndarray):
    """Metropolis proposal that slides the shape toward or away from its Poisson limit.

    The shape intercept moves by a symmetric multi-scale step. For GP the mean
    count is lambda/theta, so beta0 moves by the change in log theta (taken at
    the average shape covariate) to keep the mean in place. The map has unit
    Jacobian and the reverse step undoes it exactly.
    """
    if spec.family is Family.POISSON:
        return None
    j = N_BETA
    sd = math.sqrt(cov[j, j])
    z_bar = float(np.mean(data.Z[:, 1])) if spec.shape_regression else 0.0

    def shift(x: np.ndarray) -> np.ndarray:
        zeta = x[:, j] + (x[:, j + 1] * z_bar if spec.shape_regression else 0.0)
        return -np.logaddexp(0.0, -zeta)  # log theta

    def propose(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        scale = sd * rng.choice(JUMP_SCALES, size=x.shape[0])
        out = x.copy()
        out[:, j] += scale * rng.standard_normal(x.shape[0])
        if spec.family is Family.GEOM_POISSON:
            out[:, 0] += shift(out) - shift(x)
        return out

    return propose


def fit_mcmc(data, spec: ModelSpec, config: MCMCConfig | None = None) -> PosteriorDraws:
    config = config or MCMCConfig()
    if config.chains < 2:
        raise ValueError("at least two chains are needed for R-hat")
    data = _as_dataset(data)
    rng = np.random.default_rng(config.seed)
    mode = fit_map(data, spec)
    cov = mode.covariance
    chol = np.linalg.cholesky(cov)

    def target(x):
        return log_posterior_and_grad(x, spec, data)

    # overdispersed starts around the mode
    inits = mode.vector + 2.0 * rng.standard_normal((config.chains, spec.n_params)) @ chol.T
    lp0, _ = target(inits)
    inits[~np.isfinite(lp0)] = mode.vector

    n_warm = config.n_warmup
    n_draws = config.iterations - n_warm
    if n_draws < 4:
        raise ValueError("need at least 4 post-warmup iterations")
    res = hmc.sample(target, inits, n_warm, n_draws, rng, metric=cov, target_accept=config.target_accept,
                     jump=shape_jump(spec, data, cov))
    rhat, ess = diagnostics.summarize(res.samples)

    notes = []
    bad = [n for n, r in zip(spec.parameter_names, rhat) if not r < RHAT_WARN]
    if bad:
        notes.append(f"R-hat >= {RHAT_WARN} for {', '.join(bad)}")
    if res.divergences.sum():
        notes.append(f"{int(res.divergences.sum())} divergent transitions")
    note = dispersion_warning(data, spec)
    if note:
        notes.append(note)
    for n in notes:
        warnings.warn(n, RuntimeWarning, stacklevel=2)
    info = {"step_size": res.step_size.tolist(), "accept_rate": res.accept_rate.tolist(),
            "divergences": res.divergences.tolist(), "warmup": n_warm, "seed": config.seed}
    if res.jump_accept_rate is not None:
        info["jump_accept_rate"] = res.jump_accept_rate.tolist()
    return PosteriorDraws(res.samples, spec, rhat, ess, notes, info)


# -- prediction --------------------------------------------------------------


def pointwise_loglik(draws: PosteriorDraws | np.ndarray, data, spec: ModelSpec | None = None,
                     batch: int = 64) -> np.ndarray:
    """(draws x observations) log-likelihood matrix."""
    if isinstance(draws, PosteriorDraws):
        spec, params = draws.spec, draws.flat
    else:
        params = np.atleast_2d(draws)
    data = _as_dataset(data)
    out = np.empty((params.shape[0], len(data)))
    for start in range(0, params.shape[0], batch):
        ll, _, _ = _pointwise(params[start:start + batch], spec, data, need_grad=False)
        out[start:start + batch] = ll
    return out


def _draw_parameters(params: np.ndarray, spec: ModelSpec, row: FeatureRow) -> tuple[np.ndarray, np.ndarray | None]:
    lam = np.exp(params[:, :N_BETA] @ row.design())
    if spec.family is Family.POISSON:
        return lam, None
    zeta = params[:, N_BETA:N_BETA + 2] @ row.shape_design() if spec.shape_regression else params[:, N_BETA]
    shape = np.exp(zeta) if spec.family is Family.NEG_BINOMIAL else expit(zeta)
    return lam, shape


def predictive_pmf(params: np.ndarray, spec: ModelSpec, row: FeatureRow, tol: float = 1e-6) -> np.ndarray:
    """Mixture of per-draw pmfs over 0..cap."""
    params = np.atleast_2d(params)
    lam, shape = _draw_parameters(params, spec, row)
    if spec.family is Family.POISSON:
        mean, var = lam, lam
    elif spec.family is Family.NEG_BINOMIAL:
        mean, var = lam, lam + lam**2 / shape
    else:
        mean, var = lam / shape, lam * (2 - shape) / shape**2
    heavy = int(np.argmax(mean + 10 * np.sqrt(var)))
    heavy_dist = dcp.DcpDistribution(spec.family, float(lam[heavy]),
                                     **({} if shape is None else
                                        {"kappa" if spec.family is Family.NEG_BINOMIAL else "theta": float(shape[heavy])}))
    cap = dcp.support_cap(heavy_dist)
    while True:
        ys = np.arange(cap + 1)
        terms = dcp.gp_log_terms(ys, max(cap, 1)) if spec.family is Family.GEOM_POISSON else None
        pmf = np.zeros(cap + 1)
        chunk = max(1, 2_000_000 // (cap + 1) ** 2)
        for a in range(0, lam.size, chunk):
            sl = slice(a, a + chunk)
            with np.errstate(divide="ignore"):
                if terms is not None:
                    logp = dcp.gp_logpmf(ys[None, :], lam[sl, None], shape[sl, None], terms)
                else:
                    logp = dcp.family_logpmf(spec.family, ys[None, :], lam[sl, None],
                                             None if shape is None else shape[sl, None])
            pmf += np.exp(logp).sum(axis=0)
        pmf /= lam.size
        if pmf.sum() >= 1 - tol or cap >= dcp.HARD_CAP:
            return pmf
        cap = min(2 * cap, dcp.HARD_CAP)


def posterior_predictive(draws: PosteriorDraws, row: FeatureRow, thin: int = 4) -> np.ndarray:
    params = draws.flat[::thin] if draws.flat.shape[0] > 1 else draws.flat
    return predictive_pmf(params, draws.spec, row)
