"""Physics-informed Kriging.

The prior mean and covariance come from an ensemble of realizations of a
stochastic model instead of a parameterised kernel. Both the plain Monte
Carlo estimators and the two-level MLMC estimators are represented by an
:class:`EnsembleGp`, which stores the mean field and a matrix of scaled
anomalies ``A`` with ``k(i, j) = A[:, i] @ A[:, j]``. Covariances are formed
on demand for the node sets that are needed, never for the whole grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .gp import GpPosterior, NuggetPolicy, SpdFactorization, spd_factorize
from .grid import Field, Grid


@dataclass(frozen=True, eq=False)
class Ensemble:
    """``M`` realizations on one grid, stored as an ``(M, grid.size)`` array."""

    grid: Grid
    members: np.ndarray

    def __post_init__(self):
        Y = np.array(self.members, dtype=float)
        if Y.ndim != 2 or Y.shape[1] != self.grid.size:
            raise ValueError(f"members must have shape (M, {self.grid.size}), got {Y.shape}")
        if Y.shape[0] < 2:
            raise ValueError("an ensemble needs at least two members")
        if not np.all(np.isfinite(Y)):
            raise ValueError("ensemble members must be finite")
        Y.setflags(write=False)
        object.__setattr__(self, "members", Y)

    @classmethod
    def from_fields(cls, fields) -> "Ensemble":
        fields = list(fields)
        grid = fields[0].grid
        if any(f.grid != grid for f in fields):
            raise ValueError("all ensemble members must share one grid")
        return cls(grid, np.stack([f.values for f in fields]))

    def __len__(self) -> int:
        return self.members.shape[0]

    def member(self, m: int) -> Field:
        return Field(self.grid, self.members[m])

    def mean(self) -> np.ndarray:
        return self.members.mean(axis=0)

    def std(self) -> np.ndarray:
        return self.members.std(axis=0, ddof=1)

    def gp(self) -> "EnsembleGp":
        mean = self.mean()
        anomalies = (self.members - mean) / np.sqrt(len(self) - 1)
        return EnsembleGp(self.grid, mean, anomalies)


def ensemble_mean_cov(ens: Ensemble, i: int, j: int) -> tuple[float, float]:
    """Ensemble mean at node ``i`` and sample covariance between nodes ``i`` and ``j``."""
    Y = ens.members
    mi, mj = Y[:, i].mean(), Y[:, j].mean()
    cov = float(np.dot(Y[:, i] - mi, Y[:, j] - mj) / (len(ens) - 1))
    return float(mi), cov


@dataclass(frozen=True, eq=False)
class EnsembleGp:
    """GP whose mean and covariance are ensemble estimates on grid nodes."""

    grid: Grid
    mean: np.ndarray
    anomalies: np.ndarray

    def cov(self, rows, cols) -> np.ndarray:
        rows = np.atleast_1d(rows)
        cols = np.atleast_1d(cols)
        return self.anomalies[:, rows].T @ self.anomalies[:, cols]

    def variance(self, nodes=None) -> np.ndarray:
        A = self.anomalies if nodes is None else self.anomalies[:, np.atleast_1d(nodes)]
        return np.einsum("ki,ki->i", A, A)

    def std(self, nodes=None) -> np.ndarray:
        return np.sqrt(self.variance(nodes))

    def mean_field(self) -> Field:
        return Field(self.grid, self.mean)


def ensemble_cov_matrix(ens: Ensemble | EnsembleGp, nodes) -> np.ndarray:
    """Covariance estimate restricted to the observation nodes (exactly symmetric)."""
    gp = ens.gp() if isinstance(ens, Ensemble) else ens
    C = gp.cov(nodes, nodes)
    return 0.5 * (C + C.T)


def modified_phik_delta_mu(fact: SpdFactorization, y, mu) -> float:
    """Constant mean shift maximising the likelihood for a fixed covariance."""
    one = np.ones(fact.size)
    w1 = fact.solve(one)
    denom = float(one @ w1)
    if not denom > 0:
        raise ValueError("degenerate covariance: 1^T C^-1 1 is not positive")
    return float(w1 @ (np.asarray(y, dtype=float) - np.asarray(mu, dtype=float)) / denom)


@dataclass(frozen=True, eq=False)
class PhikModel:
    """PhIK (``delta_mu == 0``) or modified PhIK conditioned on node observations.

    The posterior mean is ``mu(x) + delta_mu + sum_i coef[i] k(x, x_i)``.
    """

    gp: EnsembleGp
    nodes: np.ndarray
    y: np.ndarray
    fact: SpdFactorization
    delta_mu: float
    coef: np.ndarray

    @property
    def nugget(self) -> float:
        return self.fact.alpha

    def residual(self) -> np.ndarray:
        return self.y - self.gp.mean[self.nodes] - self.delta_mu

    def mean_field(self) -> np.ndarray:
        return self.gp.mean + self.delta_mu + self.gp.cov(np.arange(self.gp.grid.size), self.nodes) @ self.coef

    def predict_nodes(self, query=None) -> GpPosterior:
        query = np.arange(self.gp.grid.size) if query is None else np.atleast_1d(query)
        cross = self.gp.cov(query, self.nodes)
        mean = self.gp.mean[query] + self.delta_mu + cross @ self.coef
        W = self.fact.solve(cross.T)
        raw = self.gp.variance(query) - np.einsum("ij,ji->i", cross, W)
        return GpPosterior.from_raw(mean, raw)

    def predict(self, points) -> GpPosterior:
        return self.predict_nodes(self.gp.grid.locate(points))


def fit_phik(gp: EnsembleGp, nodes, y, modified: bool = False, policy: NuggetPolicy | None = None) -> PhikModel:
    nodes = np.asarray(nodes, dtype=int)
    y = np.asarray(y, dtype=float)
    if nodes.shape != y.shape:
        raise ValueError("need one observed value per observation node")
    fact = spd_factorize(ensemble_cov_matrix(gp, nodes), policy)
    mu = gp.mean[nodes]
    delta = modified_phik_delta_mu(fact, y, mu) if modified else 0.0
    coef = fact.solve(y - mu - delta)
    return PhikModel(gp, nodes, y, fact, delta, coef)


def phik_predict(ens: Ensemble | EnsembleGp, nodes, y, xstar_node: int, policy=None) -> tuple[float, float]:
    gp = ens.gp() if isinstance(ens, Ensemble) else ens
    post = fit_phik(gp, nodes, y, policy=policy).predict_nodes([xstar_node])
    return float(post.mean[0]), float(post.variance[0])


def modified_phik_predict(ens: Ensemble | EnsembleGp, nodes, y, xstar_node: int, policy=None) -> tuple[float, float]:
    gp = ens.gp() if isinstance(ens, Ensemble) else ens
    post = fit_phik(gp, nodes, y, modified=True, policy=policy).predict_nodes([xstar_node])
    return float(post.mean[0]), float(post.variance[0])


# -- two-level Monte Carlo ---------------------------------------------------


def interpolate_to(field_values: np.ndarray, source: Grid, target: Grid) -> np.ndarray:
    """Multilinear interpolation of one or more fields from ``source`` to ``target`` nodes."""
    vals = np.atleast_2d(field_values)
    if source == target:
        return vals.copy()
    out = np.empty((vals.shape[0], target.size))
    pts = target.nodes()
    for k, v in enumerate(vals):
        interp = RegularGridInterpolator(source.axes(), v.reshape(source.shape), method="linear")
        out[k] = interp(pts)
    return out


@dataclass(frozen=True, eq=False)
class TwoLevelEnsemble:
    """Coarse realizations plus paired fine/coarse realizations.

    ``coarse`` holds the ``M_L`` coarse-grid members. ``fine`` holds the
    ``M_H`` fine-grid members and ``paired_coarse`` the coarse-grid solves
    with the same random inputs; by default these are the first ``M_H``
    coarse members.
    """

    coarse: Ensemble
    fine: Ensemble
    paired_coarse: Ensemble | None = None

    def __post_init__(self):
        paired = self.paired_coarse
        if paired is None:
            if len(self.fine) > len(self.coarse):
                raise ValueError("M_H exceeds M_L; pass the paired coarse members explicitly")
            paired = Ensemble(self.coarse.grid, self.coarse.members[: len(self.fine)])
            object.__setattr__(self, "paired_coarse", paired)
        if paired.grid != self.coarse.grid:
            raise ValueError("paired coarse members must live on the coarse grid")
        if len(paired) != len(self.fine):
            raise ValueError("need exactly one paired coarse member per fine member")

    @property
    def grid(self) -> Grid:
        return self.fine.grid

    def coarse_on_fine(self) -> np.ndarray:
        return interpolate_to(self.coarse.members, self.coarse.grid, self.grid)

    def corrections(self) -> np.ndarray:
        """``u_H^m - u_L^m`` on the fine grid, coarse values interpolated."""
        paired = interpolate_to(self.paired_coarse.members, self.coarse.grid, self.grid)
        return self.fine.members - paired

    def gp(self) -> EnsembleGp:
        UL = self.coarse_on_fine()
        Ub = self.corrections()
        mL, mb = UL.mean(axis=0), Ub.mean(axis=0)
        A = np.vstack([
            (UL - mL) / np.sqrt(UL.shape[0] - 1),
            (Ub - mb) / np.sqrt(Ub.shape[0] - 1),
        ])
        return EnsembleGp(self.grid, mL + mb, A)


def mlmc_mean(tle: TwoLevelEnsemble, node: int) -> float:
    return float(tle.coarse_on_fine()[:, node].mean() + tle.corrections()[:, node].mean())


def mlmc_cov(tle: TwoLevelEnsemble, i: int, j: int) -> float:
    UL = tle.coarse_on_fine()
    Ub = tle.corrections()
    dL = UL - UL.mean(axis=0)
    db = Ub - Ub.mean(axis=0)
    return float(dL[:, i] @ dL[:, j] / (UL.shape[0] - 1) + db[:, i] @ db[:, j] / (Ub.shape[0] - 1))


def mlmc_predict(tle: TwoLevelEnsemble, nodes, y, xstar_node: int, policy=None) -> tuple[float, float]:
    return phik_predict(tle.gp(), nodes, y, xstar_node, policy)
