"""CoPhIK: two-level auto-regressive CoKriging with an ensemble low-fidelity GP.

High-fidelity data are modelled as ``Y_H = rho * Y_L + Y_d`` where ``Y_L`` is
the ensemble GP and ``Y_d`` a stationary Gaussian-kernel GP with constant
mean. Low- and high-fidelity data share one location set, so the joint
covariance has blocks built from ``C1 = C_L(X, X)`` and ``C2 = C_d(X, X)``
only, and every joint solve reduces to one solve with each block.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

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
from .kriging import SIGMA2_FLOOR, OptimizerConfig, OrdinaryKrigingModel, fit_hyperparameters
from .phik import Ensemble, EnsembleGp, ensemble_cov_matrix


@dataclass(frozen=True)
class RhoSearchConfig:
    """Candidate grid for the regression coefficient ``rho``.

    Each candidate gets its own discrepancy-kernel fit.
    """

    lower: float = 0.0
    upper: float = 2.0
    count: int = 41

    def __post_init__(self):
        if not (self.lower <= 1.0 <= self.upper):
            raise ValueError("the rho interval must contain 1")
        if self.count < 1 or (self.count == 1 and self.lower != self.upper):
            raise ValueError("need at least one rho candidate")

    def candidates(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.count)


@dataclass(frozen=True, eq=False)
class DiscrepancyFit:
    rho: float
    model: OrdinaryKrigingModel
    trace: tuple = field(default=(), repr=False)  # (rho, loglik) per candidate

    @property
    def mu_d(self) -> float:
        return self.model.mu_hat

    @property
    def sigma2_d(self) -> float:
        """Discrepancy variance, floored so that ``C2`` stays factorizable when the
        profiled estimate is exactly zero."""
        y = self.model.obs.values
        floor = SIGMA2_FLOOR * max(float(np.mean(y * y)), np.finfo(float).tiny)
        return max(self.model.sigma2_hat, floor)

    @property
    def lengths(self) -> tuple[float, ...]:
        return self.model.lengths


def fit_discrepancy(
    X,
    y_h,
    mu_l,
    cfg: RhoSearchConfig | None = None,
    ok_cfg: OptimizerConfig | None = None,
    policy: NuggetPolicy | None = None,
    extent=None,
    workers: int = 1,
) -> DiscrepancyFit:
    """Pick ``rho`` and the discrepancy GP by maximum likelihood of ``y_H - rho * mu_L``.

    Ties go to the smaller ``rho``.
    """
    cfg = cfg or RhoSearchConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y_h = np.asarray(y_h, dtype=float)
    mu_l = np.asarray(mu_l, dtype=float)
    if y_h.shape != mu_l.shape or y_h.size != X.shape[0]:
        raise ValueError("y_H, mu_L and X must have matching lengths")

    def one(rho):
        try:
            return fit_hyperparameters(ObservationSet(X, y_h - rho * mu_l), ok_cfg, policy, extent)
        except FactorizationError:
            return None

    rhos = cfg.candidates()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(one, rhos))
    else:
        models = [one(r) for r in rhos]

    trace = tuple((float(r), m.log_likelihood if m is not None else -math.inf) for r, m in zip(rhos, models))
    best = None
    for k, m in enumerate(models):
        if m is not None and (best is None or m.log_likelihood > models[best].log_likelihood):
            best = k
    if best is None:
        raise FactorizationError("discrepancy GP could not be fitted for any rho candidate")
    return DiscrepancyFit(float(rhos[best]), models[best], trace)


def assemble_joint_cov(C1, C2, rho: float) -> np.ndarray:
    C1 = np.asarray(C1, dtype=float)
    C2 = np.asarray(C2, dtype=float)
    if C1.shape != C2.shape or C1.shape[0] != C1.shape[1]:
        raise ValueError(f"blocks must be square and equal-sized, got {C1.shape} and {C2.shape}")
    return np.block([[C1, rho * C1], [rho * C1, rho * rho * C1 + C2]])


def block_inverse_apply(f1: SpdFactorization, f2: SpdFactorization, rho: float, residual) -> np.ndarray:
    """Apply the inverse joint covariance via the two block factorizations.

    Works column-wise when ``residual`` is ``(2N, k)``.
    """
    r = np.asarray(residual, dtype=float)
    n = f1.size
    if f2.size != n or r.shape[0] != 2 * n:
        raise ValueError("residual must stack two blocks of the factorization size")
    u, v = r[:n], r[n:]
    z = f2.solve(v - rho * u)
    return np.concatenate([f1.solve(u) - rho * z, z])


def joint_log_likelihood(f1: SpdFactorization, f2: SpdFactorization, rho: float, residual) -> float:
    """Joint log marginal likelihood of ``(y_L, y_H)``; ``|C~| = |C1| |C2|``."""
    r = np.asarray(residual, dtype=float)
    n = f1.size
    u, v = r[:n], r[n:]
    quad = f1.quad(u) + f2.quad(v - rho * u)
    return -0.5 * quad - 0.5 * (f1.logdet + f2.logdet) - n * LOG_2PI


@dataclass(frozen=True, eq=False)
class CoPhikModel:
    low: EnsembleGp
    nodes: np.ndarray
    y_h: np.ndarray
    y_l: np.ndarray
    y_l_source: int  # member index, or -1 for the ensemble mean
    rho: float
    discrepancy: DiscrepancyFit
    f1: SpdFactorization
    f2: SpdFactorization
    selection_trace: tuple = field(default=(), repr=False)

    @property
    def X(self) -> np.ndarray:
        return self.discrepancy.model.obs.locations

    @property
    def mu_d(self) -> float:
        return self.discrepancy.mu_d

    @property
    def sigma2_d(self) -> float:
        return self.discrepancy.sigma2_d

    @property
    def nugget(self) -> tuple[float, float]:
        return self.f1.alpha, self.f2.alpha

    def mu_l(self) -> np.ndarray:
        return self.low.mean[self.nodes]

    def joint_residual(self) -> np.ndarray:
        mu_l = self.mu_l()
        return np.concatenate([self.y_l - mu_l, self.y_h - (self.rho * mu_l + self.mu_d)])

    def weights(self) -> np.ndarray:
        return block_inverse_apply(self.f1, self.f2, self.rho, self.joint_residual())

    def kd(self, points) -> np.ndarray:
        return self.sigma2_d * gaussian_correlation(points, self.X, self.discrepancy.lengths)

    def _cross(self, query):
        points = self.low.grid.nodes()[query]
        cl = self.low.cov(query, self.nodes)
        cd = self.kd(points)
        return cl, cd

    def predict_nodes(self, query=None) -> GpPosterior:
        query = np.arange(self.low.grid.size) if query is None else np.atleast_1d(query)
        cl, cd = self._cross(query)
        ct = np.hstack([self.rho * cl, self.rho**2 * cl + cd])
        mean = self.rho * self.low.mean[query] + self.mu_d + ct @ self.weights()
        W = block_inverse_apply(self.f1, self.f2, self.rho, ct.T)
        prior = self.rho**2 * self.low.variance(query) + self.sigma2_d
        raw = prior - np.einsum("ij,ji->i", ct, W)
        return GpPosterior.from_raw(mean, raw)

    def predict(self, points) -> GpPosterior:
        return self.predict_nodes(self.low.grid.locate(points))

    def prior_variance(self, query) -> np.ndarray:
        return self.rho**2 * self.low.variance(query) + self.sigma2_d

    def decomposition(self, query=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The scaled-PhIK part, the low-fidelity correction and the discrepancy part.

        The posterior mean equals ``S1 - S2 + S3``.
        """
        query = np.arange(self.low.grid.size) if query is None else np.atleast_1d(query)
        cl, cd = self._cross(query)
        mu_l = self.mu_l()
        a = self.f1.solve(self.y_h - mu_l)
        b = self.f1.solve(self.y_h - self.y_l)
        q = self.f2.solve(self.y_h - self.rho * self.y_l - self.mu_d)
        S1 = self.rho * (self.low.mean[query] + cl @ a)
        S2 = self.rho * (cl @ b)
        S3 = self.mu_d + cd @ q
        return S1, S2, S3


def select_y_l(candidates, mu_l, y_h, f1: SpdFactorization, f2: SpdFactorization, rho: float, mu_d: float):
    """Index of the candidate low-fidelity vector maximising the joint likelihood.

    The first maximum wins. Returns ``(index, trace)``.
    """
    mu_l = np.asarray(mu_l, dtype=float)
    r_h = np.asarray(y_h, dtype=float) - (rho * mu_l + mu_d)
    trace = []
    best, best_ll = None, -math.inf
    for k, cand in enumerate(candidates):
        ll = joint_log_likelihood(f1, f2, rho, np.concatenate([np.asarray(cand) - mu_l, r_h]))
        trace.append(ll)
        if ll > best_ll:
            best, best_ll = k, ll
    if best is None:
        raise FactorizationError("no low-fidelity candidate has a finite joint likelihood")
    return best, tuple(trace)


def fit_cophik(
    ens: Ensemble,
    nodes,
    y_h,
    rho_cfg: RhoSearchConfig | None = None,
    ok_cfg: OptimizerConfig | None = None,
    policy: NuggetPolicy | None = None,
    include_mean: bool = True,
    workers: int = 1,
) -> CoPhikModel:
    """Build the CoPhIK model from an ensemble and high-fidelity node observations."""
    nodes = np.asarray(nodes, dtype=int)
    y_h = np.asarray(y_h, dtype=float)
    if nodes.shape != y_h.shape:
        raise ValueError("need one observed value per observation node")
    gp = ens.gp()
    grid = ens.grid
    X = grid.nodes()[nodes]
    mu_l = gp.mean[nodes]

    disc = fit_discrepancy(X, y_h, mu_l, rho_cfg, ok_cfg, policy, extent=grid.extent, workers=workers)
    rho = disc.rho
    f1 = spd_factorize(ensemble_cov_matrix(gp, nodes), policy)
    f2 = spd_factorize(disc.sigma2_d * gaussian_correlation(X, X, disc.lengths), policy)

    candidates = [ens.members[m, nodes] for m in range(len(ens))]
    if include_mean:
        candidates.append(mu_l)
    k, trace = select_y_l(candidates, mu_l, y_h, f1, f2, rho, disc.mu_d)
    source = -1 if (include_mean and k == len(ens)) else k
    return CoPhikModel(gp, nodes, y_h, np.array(candidates[k]), source, rho, disc, f1, f2, trace)


def cophik_predict(model: CoPhikModel, xstar_node: int) -> tuple[float, float]:
    post = model.predict_nodes([xstar_node])
    return float(post.mean[0]), float(post.variance[0])


def posterior_decomposition(model: CoPhikModel, xstar_node: int) -> tuple[float, float, float]:
    S1, S2, S3 = model.decomposition([xstar_node])
    return float(S1[0]), float(S2[0]), float(S3[0])
