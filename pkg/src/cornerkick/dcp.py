"""Discrete compound Poisson (DCP) count distributions.

Three members are supported: Poisson (no clustering), negative binomial
(logarithmic cluster sizes) and geometric-Poisson, also known as
Polya-Aeppli (zero-truncated geometric cluster sizes).

Parameterisation
----------------
Poisson(lam)
    mean ``lam``.
NegBinomial(lam, kappa)
    mean ``lam``, variance ``lam + lam**2 / kappa``.
GeomPoisson(lam, theta)
    cluster rate ``lam``, cluster sizes ``P(X = x) = theta (1 - theta)**(x - 1)``,
    mean ``lam / theta`` and variance ``lam (2 - theta) / theta**2``.

The vectorised ``*_logpmf`` helpers broadcast over arrays and are what the
regression code calls in its inner loops; ``log_pmf``/``cdf``/``pgf`` are the
scalar, validated entry points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize
from scipy.special import gammaln, logsumexp

SURVIVAL_TOL = 1e-12
HARD_CAP = 500


class ParameterError(ValueError):
    """Distribution parameters outside their domain."""


class DispersionError(ValueError):
    """Sample is not overdispersed; the shape MLE does not exist."""


class Family(str, Enum):
    POISSON = "poisson"
    NEG_BINOMIAL = "nb"
    GEOM_POISSON = "gp"

    @classmethod
    def parse(cls, value: "Family | str") -> "Family":
        if isinstance(value, Family):
            return value
        aliases = {
            "poisson": cls.POISSON,
            "nb": cls.NEG_BINOMIAL,
            "negbinomial": cls.NEG_BINOMIAL,
            "negative_binomial": cls.NEG_BINOMIAL,
            "gp": cls.GEOM_POISSON,
            "geompoisson": cls.GEOM_POISSON,
            "geometric_poisson": cls.GEOM_POISSON,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown family {value!r}") from None


@dataclass(frozen=True)
class DcpDistribution:
    family: Family
    lam: float
    kappa: float | None = None
    theta: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ParameterError(f"lam must be positive and finite, got {self.lam}")
        if self.family is Family.NEG_BINOMIAL:
            if self.kappa is None or not self.kappa > 0 or self.theta is not None:
                raise ParameterError("NegBinomial needs kappa > 0 and no theta")
        elif self.family is Family.GEOM_POISSON:
            if self.theta is None or not 0 < self.theta < 1 or self.kappa is not None:
                raise ParameterError("GeomPoisson needs 0 < theta < 1 and no kappa")
        elif self.kappa is not None or self.theta is not None:
            raise ParameterError("Poisson takes no shape parameter")

    @classmethod
    def poisson(cls, lam: float) -> "DcpDistribution":
        return cls(Family.POISSON, lam)

    @classmethod
    def neg_binomial(cls, lam: float, kappa: float) -> "DcpDistribution":
        return cls(Family.NEG_BINOMIAL, lam, kappa=kappa)

    @classmethod
    def geom_poisson(cls, lam: float, theta: float) -> "DcpDistribution":
        return cls(Family.GEOM_POISSON, lam, theta=theta)

    @property
    def shape(self) -> float | None:
        """kappa for NB, theta for GP, None for Poisson."""
        if self.family is Family.NEG_BINOMIAL:
            return self.kappa
        if self.family is Family.GEOM_POISSON:
            return self.theta
        return None


@dataclass(frozen=True)
class ClusterLaw:
    """Cluster-size probabilities ``weights[i]`` = P(X = i + 1)."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.size == 0 or np.any(w < 0):
            raise ParameterError("cluster weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError(f"cluster weights sum to {w.sum()}, not 1")

    def pgf(self, s: float) -> float:
        sizes = np.arange(1, len(self.weights) + 1)
        return float(np.sum(np.asarray(self.weights) * s**sizes))


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    variance: float
    dispersion: float


# -- vectorised log-mass functions -------------------------------------------


def poisson_logpmf(y, lam):
    y = np.asarray(y, dtype=float)
    return y * np.log(lam) - lam - gammaln(y + 1)


def negbin_logpmf(y, lam, kappa):
    y = np.asarray(y, dtype=float)
    log_denom = np.log(lam + kappa)
    return (
        gammaln(y + kappa)
        - gammaln(kappa)
        - gammaln(y + 1)
        + y * (np.log(lam) - log_denom)
        + kappa * (np.log(kappa) - log_denom)
    )


def log_factorial_table(n: int) -> np.ndarray:
    """``table[i] = log(i!)`` for i = 0..n, built by cumulative sums."""
    table = np.zeros(n + 1)
    if n > 0:
        table[1:] = np.cumsum(np.log(np.arange(1, n + 1)))
    return table


def gp_log_terms(y, kmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Data-only part of the geometric-Poisson k-sum.

    Returns ``(base, k)`` where ``base[..., j]`` holds
    ``log C(y-1, k-1) - log k!`` for ``k = j + 1`` (``-inf`` where k > y) and
    ``k`` is the vector ``1..kmax``. Rows with y = 0 are all ``-inf``.
    """
    y = np.asarray(y, dtype=np.int64)
    lf = log_factorial_table(max(kmax, int(y.max(initial=0))) + 1)
    k = np.arange(1, kmax + 1)
    yy = y[..., None]
    valid = (k <= yy) & (yy >= 1)
    ym1 = np.maximum(yy - 1, 0)
    km1 = k - 1
    log_binom = lf[ym1] - lf[km1] - lf[np.clip(ym1 - km1, 0, None)]
    base = np.where(valid, log_binom - lf[k], -np.inf)
    return base, k


def gp_logpmf(y, lam, theta, _terms: tuple[np.ndarray, np.ndarray] | None = None):
    """Geometric-Poisson log-pmf, k-sum done by log-sum-exp.

    ``log p(y) = -lam + y log(1-theta) + logsumexp_k[base_k + k (log lam + logit theta)]``
    for y >= 1 and ``-lam`` at y = 0.
    """
    y = np.asarray(y)
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if _terms is None:
        _terms = gp_log_terms(y, max(int(np.max(y, initial=0)), 1))
    base, k = _terms
    slope = np.log(lam) + np.log(theta) - np.log1p(-theta)
    z = base + k * np.asarray(slope)[..., None]
    inner = logsumexp(z, axis=-1)
    inner = np.where(y >= 1, inner, 0.0)
    return -lam + y * np.log1p(-theta) + inner


def family_logpmf(family: Family, y, lam, shape=None):
    """Vectorised log-pmf for any family; ``shape`` is kappa or theta."""
    family = Family.parse(family)
    if family is Family.POISSON:
        return poisson_logpmf(y, lam)
    if family is Family.NEG_BINOMIAL:
        return negbin_logpmf(y, lam, shape)
    return gp_logpmf(y, lam, shape)


# -- scalar API -------------------------------------------------------------


def _check_count(y) -> int:
    if isinstance(y, (bool, np.bool_)) or int(y) != y or y < 0:
        raise ParameterError(f"y must be a nonnegative integer, got {y!r}")
    return int(y)


def log_pmf(dist: DcpDistribution, y: int) -> float:
    y = _check_count(y)
    return float(family_logpmf(dist.family, np.array(y), dist.lam, dist.shape))


def pmf(dist: DcpDistribution, y: int) -> float:
    return math.exp(log_pmf(dist, y))


def pmf_vector(dist: DcpDistribution, ymax: int) -> np.ndarray:
    """pmf on 0..ymax."""
    ys = np.arange(ymax + 1)
    return np.exp(family_logpmf(dist.family, ys, dist.lam, dist.shape))


def support_cap(dist: DcpDistribution, tol: float = SURVIVAL_TOL, hard_cap: int = HARD_CAP) -> int:
    """Smallest y with P(Y > y) < tol, capped at ``hard_cap``."""
    p = pmf_vector(dist, hard_cap)
    # survival from the tail upward avoids 1 - cdf cancellation; mass past the cap counts too
    beyond = max(0.0, 1.0 - math.fsum(p))
    sf = np.cumsum(p[::-1])[::-1] - p + beyond
    hits = np.nonzero(sf < tol)[0]
    return int(hits[0]) if hits.size else hard_cap


def truncated_pmf(dist: DcpDistribution, tol: float = SURVIVAL_TOL, hard_cap: int = HARD_CAP) -> np.ndarray:
    return pmf_vector(dist, support_cap(dist, tol, hard_cap))


def cdf(dist: DcpDistribution, y: int) -> float:
    y = _check_count(y)
    cap = support_cap(dist)
    if y >= cap:
        return float(min(1.0, pmf_vector(dist, cap).sum()))
    return float(pmf_vector(dist, y).sum())


def pgf(dist: DcpDistribution, s: float) -> float:
    if not 0.0 <= s <= 1.0:
        raise ParameterError(f"pgf argument must lie in [0, 1], got {s}")
    lam = dist.lam
    if dist.family is Family.POISSON:
        return math.exp(lam * (s - 1.0))
    if dist.family is Family.NEG_BINOMIAL:
        kappa = dist.kappa
        return (kappa / (lam * (1.0 - s) + kappa)) ** kappa
    # cluster pgf theta s / (1 - (1 - theta) s) matches the pmf and mean lam / theta
    theta = dist.theta
    return math.exp(-lam * (1.0 - theta * s / (1.0 - (1.0 - theta) * s)))


def moments(dist: DcpDistribution) -> MomentSummary:
    lam = dist.lam
    if dist.family is Family.POISSON:
        mean, var = lam, lam
    elif dist.family is Family.NEG_BINOMIAL:
        mean, var = lam, lam + lam**2 / dist.kappa
    else:
        theta = dist.theta
        mean, var = lam / theta, lam * (2.0 - theta) / theta**2
    return MomentSummary(mean=mean, variance=var, dispersion=var / mean)


def compound_form(dist: DcpDistribution) -> tuple[float, str, float]:
    """Cluster-arrival rate and cluster law of the compound construction.

    Returns ``(rate, law, param)`` with law one of ``"degenerate"``,
    ``"logarithmic"`` or ``"geometric"``.

    NB mapping: with ``p = lam / (lam + kappa)`` and ``rate = -kappa log(1 - p)``
    the composition ``exp(rate (G_X(s) - 1))`` with the logarithmic pgf
    ``G_X(s) = log(1 - p s) / log(1 - p)`` equals
    ``((1 - p) / (1 - p s))**kappa = (kappa / (kappa + lam (1 - s)))**kappa``.
    """
    if dist.family is Family.POISSON:
        return dist.lam, "degenerate", 1.0
    if dist.family is Family.NEG_BINOMIAL:
        p = dist.lam / (dist.lam + dist.kappa)
        return -dist.kappa * math.log1p(-p), "logarithmic", p
    return dist.lam, "geometric", dist.theta


def cluster_law(dist: DcpDistribution, max_size: int = 2000) -> tuple[float, ClusterLaw]:
    """Rate and (truncated, renormalised) cluster-size law of ``dist``."""
    rate, law, param = compound_form(dist)
    x = np.arange(1, max_size + 1, dtype=float)
    if law == "degenerate":
        w = np.zeros(max_size)
        w[0] = 1.0
    elif law == "logarithmic":
        w = np.exp(x * math.log(param) - np.log(x)) / -math.log1p(-param)
    else:
        w = param * (1.0 - param) ** (x - 1)
    return rate, ClusterLaw(tuple(w / w.sum()))


def sample(dist: DcpDistribution, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` counts as Poisson-many iid cluster sizes summed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    rate, law, param = compound_form(dist)
    clusters = rng.poisson(rate, size=n)
    if law == "degenerate":
        return clusters.astype(np.int64)
    total = int(clusters.sum())
    if law == "logarithmic":
        sizes = rng.logseries(param, size=total)
    else:
        sizes = rng.geometric(param, size=total)
    owner = np.repeat(np.arange(n), clusters)
    return np.bincount(owner, weights=sizes, minlength=n).astype(np.int64)


def _grouped_loglik(family: Family, values: np.ndarray, counts: np.ndarray, lam: float, shape) -> float:
    return float(np.sum(counts * family_logpmf(family, values, lam, shape)))


def fit_mle(family: Family | str, data) -> DcpDistribution:
    """Maximum likelihood fit by a profile search over the shape parameter.

    The mean is matched to the sample mean at every step, so NB uses
    ``lam = ybar`` and GP uses ``lam = theta * ybar``.
    """
    family = Family.parse(family)
    y = np.asarray(data)
    if y.size == 0:
        raise ValueError("data must be nonempty")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ParameterError("data must be nonnegative integers")
    ybar = float(y.mean())
    if family is Family.POISSON:
        return DcpDistribution.poisson(ybar)
    s2 = float(y.var(ddof=1)) if y.size > 1 else 0.0
    if not s2 > ybar:
        raise DispersionError(
            f"shape MLE requires sample variance > sample mean (s^2 > ybar); got s^2={s2:.6g}, ybar={ybar:.6g}"
        )
    values, counts = np.unique(y.astype(np.int64), return_counts=True)

    if family is Family.NEG_BINOMIAL:
        def nll(log_kappa):
            return -_grouped_loglik(family, values, counts, ybar, math.exp(log_kappa))

        lo, hi = math.log(1e-2), math.log(1e6)
        start = min(max(math.log(ybar**2 / (s2 - ybar)), lo), hi)
        res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        best = res.x if res.fun <= nll(start) else start
        return DcpDistribution.neg_binomial(ybar, math.exp(best))

    terms = gp_log_terms(values, max(int(values.max()), 1))

    def nll_theta(theta):
        return -float(np.sum(counts * gp_logpmf(values, theta * ybar, theta, terms)))

    lo, hi = 1e-4, 1 - 1e-4
    start = min(max(2.0 / (s2 / ybar + 1.0), lo), hi)
    res = optimize.minimize_scalar(nll_theta, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    best = res.x if res.fun <= nll_theta(start) else start
    return DcpDistribution.geom_poisson(best * ybar, best)
