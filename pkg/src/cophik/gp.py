"""Gaussian-process building blocks.

Gaussian kernel, covariance assembly, nugget-regularised Cholesky
factorisation, log marginal likelihood and the generic posterior formula
shared by every learner in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import lapack

LOG_2PI = math.log(2.0 * math.pi)


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky failed even at the largest nugget of the policy."""


@dataclass(frozen=True)
class GaussianKernelParams:
    sigma2: float
    lengths: tuple[float, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if len(lengths) == 0 or not all(v > 0 for v in lengths):
            raise ValueError(f"correlation lengths must be positive, got {lengths}")
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self) -> int:
        return len(self.lengths)


def gaussian_correlation(A, B, lengths) -> np.ndarray:
    """Unit-variance Gaussian correlation between two point sets.

    ``A`` is ``(n, d)``, ``B`` is ``(m, d)``; returns ``(n, m)`` with entries
    ``exp(-0.5 * sum(((a - b) / l)**2))``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    lengths = np.asarray(lengths, dtype=float)
    if A.shape[1] != lengths.size or B.shape[1] != lengths.size:
        raise ValueError(
            f"dimension mismatch: points {A.shape[1]}/{B.shape[1]}, lengths {lengths.size}"
        )
    diff = (A[:, None, :] - B[None, :, :]) / lengths
    return np.exp(-0.5 * np.einsum("ijk,ijk->ij", diff, diff))


def gaussian_kernel(params: GaussianKernelParams, x, xp) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != xp.shape or x.size != params.dim:
        raise ValueError(f"dimension mismatch: {x.size}, {xp.size} vs kernel dimension {params.dim}")
    tau = (x - xp) / np.asarray(params.lengths)
    return params.sigma2 * math.exp(-0.5 * float(tau @ tau))


def assemble_covariance(kernel: Callable, X) -> np.ndarray:
    """Covariance matrix ``C[i, j] = kernel(X[i], X[j])`` from a pointwise kernel.

    Only the upper triangle is evaluated; the result is exactly symmetric.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    C = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            C[i, j] = C[j, i] = kernel(X[i], X[j])
    if not np.all(np.isfinite(C)):
        raise ValueError("kernel produced a non-finite covariance entry")
    return C


def covariance_vector(kernel: Callable, X, xstar) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    xstar = np.atleast_1d(np.asarray(xstar, dtype=float))
    if xstar.size != X.shape[1]:
        raise ValueError(f"query point has dimension {xstar.size}, data has {X.shape[1]}")
    return np.array([kernel(xi, xstar) for xi in X])


@dataclass(frozen=True)
class NuggetPolicy:
    """Diagonal jitter ladder ``0, initial, initial*growth, ..., cap``.

    ``initial`` and ``cap`` are relative to the mean diagonal of the matrix
    being factorised.
    """

    initial: float = 1e-10
    growth: float = 10.0
    cap: float = 1e-4

    def __post_init__(self):
        if not self.initial > 0:
            raise ValueError("initial nugget must be positive")
        if self.cap < self.initial:
            raise ValueError("nugget cap must be >= initial nugget")
        if not self.growth > 1:
            raise ValueError("nugget growth factor must exceed 1")

    def ladder(self, scale: float) -> list[float]:
        rungs = [0.0]
        rel = self.initial
        # small slack so that e.g. 1e-10 * 10**6 still reaches a 1e-4 cap
        while rel <= self.cap * (1 + 1e-9):
            rungs.append(rel * scale)
            rel *= self.growth
        return rungs


DEFAULT_NUGGET = NuggetPolicy()


@dataclass(frozen=True, eq=False)
class SpdFactorization:
    """Lower Cholesky factor of ``C + alpha * I``."""

    lower: np.ndarray
    alpha: float
    logdet: float

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    def solve(self, b) -> np.ndarray:
        x, info = lapack.dpotrs(self.lower, np.asarray(b, dtype=float), lower=1)
        if info != 0:
            raise ValueError(f"dpotrs failed with info={info}")
        return x

    def matrix(self) -> np.ndarray:
        """The regularised matrix ``C + alpha * I`` that was factorised."""
        return self.lower @ self.lower.T

    def half_solve(self, b) -> np.ndarray:
        """``L^{-1} b`` for the lower factor ``L``."""
        z, info = lapack.dtrtrs(self.lower, np.asarray(b, dtype=float), lower=1)
        if info != 0:
            raise ValueError(f"dtrtrs failed with info={info}")
        return z

    def quad(self, r) -> float:
        """``r^T (C + alpha I)^{-1} r`` via one triangular solve."""
        z = self.half_solve(r)
        return float(z @ z)


def _cholesky(C) -> SpdFactorization | None:
    L, info = lapack.dpotrf(C, lower=1, clean=1)
    if info != 0:
        return None
    # info == 0 guarantees a positive diagonal
    logdet = 2.0 * float(np.log(L.diagonal()).sum())
    return SpdFactorization(L, 0.0, logdet) if math.isfinite(logdet) else None


def spd_factorize(C, policy: NuggetPolicy | None = None) -> SpdFactorization:
    """Cholesky of ``C + alpha I`` for the smallest ladder ``alpha`` that works."""
    policy = policy or DEFAULT_NUGGET
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {C.shape}")
    if not np.isfinite(C).all():
        raise ValueError("matrix has non-finite entries")
    fact = _cholesky(C)
    if fact is not None:
        return fact
    scale = float(np.trace(C)) / C.shape[0]
    if not scale > 0:
        scale = 1.0
    eye = np.eye(C.shape[0])
    for alpha in policy.ladder(scale)[1:]:
        fact = _cholesky(C + alpha * eye)
        if fact is not None:
            return SpdFactorization(fact.lower, alpha, fact.logdet)
    raise FactorizationError(
        f"matrix not positive definite even with nugget {policy.cap:g} x mean diagonal"
    )


def log_marginal_likelihood(y, mu, fact: SpdFactorization) -> float:
    r = np.asarray(y, dtype=float) - np.asarray(mu, dtype=float)
    if r.shape != (fact.size,):
        raise ValueError(f"residual length {r.size} does not match factorization size {fact.size}")
    return -0.5 * fact.quad(r) - 0.5 * fact.logdet - 0.5 * fact.size * LOG_2PI


@dataclass(frozen=True, eq=False)
class GpPosterior:
    """Posterior mean and variance at a batch of query points.

    ``variance`` is clamped at zero; ``raw_variance`` keeps the unclamped
    values for diagnostics.
    """

    mean: np.ndarray
    variance: np.ndarray
    raw_variance: np.ndarray

    @classmethod
    def from_raw(cls, mean, raw_variance) -> "GpPosterior":
        raw = np.asarray(raw_variance, dtype=float)
        return cls(np.asarray(mean, dtype=float), np.maximum(raw, 0.0), raw)

    @property
    def rmse(self) -> np.ndarray:
        return np.sqrt(self.variance)


def posterior_from_parts(prior_mean, prior_var, cross, residual, fact: SpdFactorization) -> GpPosterior:
    """Generic GP conditioning.

    ``cross`` is ``(n_query, N)`` covariances between query points and data,
    ``residual`` is ``y - mu`` at the data.
    """
    cross = np.atleast_2d(cross)
    mean = np.asarray(prior_mean, dtype=float) + cross @ fact.solve(residual)
    W = fact.solve(cross.T)
    raw = np.asarray(prior_var, dtype=float) - np.einsum("ij,ji->i", cross, W)
    return GpPosterior.from_raw(mean, raw)


def gp_posterior(mean_fn: Callable, kernel: Callable, obs, xstar, policy: NuggetPolicy | None = None):
    """Posterior ``(mean, variance)`` at a single point for arbitrary mean and kernel callables."""
    X = obs.locations
    C = assemble_covariance(kernel, X)
    fact = spd_factorize(C, policy)
    mu = np.array([mean_fn(x) for x in X])
    c = covariance_vector(kernel, X, xstar)
    post = posterior_from_parts(
        [mean_fn(xstar)], [kernel(xstar, xstar)], c[None, :], obs.values - mu, fact
    )
    return float(post.mean[0]), float(post.variance[0])
