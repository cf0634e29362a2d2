"""Ordinary Kriging with maximum-likelihood correlation lengths.

The constant mean and process variance are profiled out in closed form, so
only the log correlation lengths are searched (multi-start Nelder-Mead from a
Latin hypercube of starting points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .gp import (
    LOG_2PI,
    FactorizationError,
    GpPosterior,
    NuggetPolicy,
    SpdFactorization,
    gaussian_correlation,
    spd_factorize,
)
from .grid import ObservationSet

# profiled variance is floored relative to mean(y**2) so that exactly
# representable data (sigma2_hat == 0) keeps a finite likelihood
SIGMA2_FLOOR = 1e-14
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class OptimizerConfig:
    """Search settings for the correlation lengths.

    Bounds are multiples of the per-axis extent of the domain.
    """

    lower_factor: float = 1e-2
    upper_factor: float = 1e2
    starts: int = 10
    tol: float = 1e-8
    max_iter: int = 500
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.lower_factor < self.upper_factor:
            raise ValueError("length bounds must satisfy 0 < lower < upper")
        if self.starts < 1:
            raise ValueError("need at least one optimizer start")

    def log_bounds(self, extent) -> tuple[np.ndarray, np.ndarray]:
        extent = np.asarray(extent, dtype=float)
        return np.log(self.lower_factor * extent), np.log(self.upper_factor * extent)


def mle_mean_variance(psi_fact: SpdFactorization, y) -> tuple[float, float]:
    """Closed-form MLE of the constant mean and process variance."""
    y = np.asarray(y, dtype=float)
    # one triangular solve with [1, y]; L^-1 (y - mu 1) is then a linear combination
    b = np.empty((y.size, 2), order="F")
    b[:, 0] = 1.0
    b[:, 1] = y
    z = psi_fact.half_solve(b)
    z1, zy = z[:, 0], z[:, 1]
    mu = float(z1 @ zy) / float(z1 @ z1)
    zr = zy - mu * z1
    sigma2 = max(float(zr @ zr) / y.size, 0.0)
    return mu, sigma2


def concentrated_log_likelihood(psi_fact: SpdFactorization, y) -> tuple[float, float, float]:
    """Log marginal likelihood with mean and variance at their MLEs.

    Returns ``(loglik, mu_hat, sigma2_hat)``.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    mu, sigma2 = mle_mean_variance(psi_fact, y)
    floor = SIGMA2_FLOOR * max(float(y @ y) / n, _TINY)
    s2 = max(sigma2, floor)
    ll = -0.5 * n * (math.log(s2) + 1.0 + LOG_2PI) - 0.5 * psi_fact.logdet
    return ll, mu, sigma2


@dataclass(frozen=True, eq=False)
class OrdinaryKrigingModel:
    obs: ObservationSet
    lengths: tuple[float, ...]
    mu_hat: float
    sigma2_hat: float
    psi_fact: SpdFactorization
    log_likelihood: float
    trace: tuple = field(default=(), repr=False)

    @property
    def nugget(self) -> float:
        return self.psi_fact.alpha

    def correlation(self, points) -> np.ndarray:
        return gaussian_correlation(points, self.obs.locations, self.lengths)

    def predict(self, points) -> GpPosterior:
        psi = self.correlation(points)
        mean = self.mu_hat + psi @ self.psi_fact.solve(self.obs.values - self.mu_hat)
        W = self.psi_fact.solve(psi.T)
        raw = self.sigma2_hat * (1.0 - np.einsum("ij,ji->i", psi, W))
        return GpPosterior.from_raw(mean, raw)


def ok_predict(model: OrdinaryKrigingModel, xstar) -> tuple[float, float]:
    post = model.predict(np.atleast_2d(xstar))
    return float(post.mean[0]), float(post.variance[0])


class _LikelihoodSurface:
    """Concentrated likelihood as a function of log correlation lengths.

    Squared coordinate differences are computed once per data set.
    """

    def __init__(self, obs: ObservationSet, policy: NuggetPolicy | None):
        X = obs.locations
        self.obs = obs
        self.policy = policy
        n = X.shape[0]
        self.shape = (n, n)
        self.sq = np.stack([((X[:, None, k] - X[None, :, k]) ** 2).ravel() for k in range(X.shape[1])])

    def factor(self, lengths) -> SpdFactorization:
        inv2 = 0.5 / np.asarray(lengths, dtype=float) ** 2
        psi = np.exp(-(inv2 @ self.sq)).reshape(self.shape)
        return spd_factorize(psi, self.policy)

    def __call__(self, log_lengths) -> float:
        try:
            fact = self.factor(np.exp(log_lengths))
        except FactorizationError:
            return -math.inf
        return concentrated_log_likelihood(fact, self.obs.values)[0]

    def model(self, lengths, trace=()) -> OrdinaryKrigingModel:
        lengths = tuple(float(v) for v in np.atleast_1d(lengths))
        fact = self.factor(lengths)
        ll, mu, s2 = concentrated_log_likelihood(fact, self.obs.values)
        return OrdinaryKrigingModel(self.obs, lengths, mu, s2, fact, ll, tuple(trace))


def build_model(obs: ObservationSet, lengths, policy: NuggetPolicy | None = None) -> OrdinaryKrigingModel:
    """Ordinary Kriging model at fixed correlation lengths."""
    return _LikelihoodSurface(obs, policy).model(lengths)


def _extent_of(obs: ObservationSet, extent) -> np.ndarray:
    if extent is not None:
        ext = np.broadcast_to(np.asarray(extent, dtype=float), (obs.dim,)).copy()
    else:
        ext = np.ptp(obs.locations, axis=0)
    ext[~(ext > 0)] = 1.0
    return ext


def fit_hyperparameters(
    obs: ObservationSet,
    cfg: OptimizerConfig | None = None,
    policy: NuggetPolicy | None = None,
    extent=None,
) -> OrdinaryKrigingModel:
    """Maximise the concentrated likelihood over log correlation lengths.

    Every likelihood evaluation is recorded; the returned model is the best
    evaluated point overall (ties go to the earliest evaluation), which is
    therefore never worse than any of the Latin-hypercube starts.

    ``extent`` sets the per-axis length bounds; it defaults to the spread of
    the observation locations.
    """
    cfg = cfg or OptimizerConfig()
    if len(obs) < 2:
        raise ValueError("fitting correlation lengths needs at least two observations")
    lo, hi = cfg.log_bounds(_extent_of(obs, extent))
    d = obs.dim
    surface = _LikelihoodSurface(obs, policy)
    trace: list[tuple[tuple[float, ...], float]] = []

    def objective(theta):
        theta = np.clip(theta, lo, hi)
        ll = surface(theta)
        trace.append((tuple(theta), ll))
        return -ll if np.isfinite(ll) else math.inf

    sampler = qmc.LatinHypercube(d=d, seed=np.random.default_rng(cfg.seed))
    starts = qmc.scale(sampler.random(cfg.starts), lo, hi)
    bounds = list(zip(lo, hi))
    for x0 in starts:
        minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options={"xatol": cfg.tol, "fatol": cfg.tol, "maxiter": cfg.max_iter},
        )

    values = np.array([v for _, v in trace])
    if not np.any(np.isfinite(values)):
        raise FactorizationError("correlation matrix could not be factorised at any start")
    best = int(np.argmax(values))
    return surface.model(np.exp(trace[best][0]), trace)
