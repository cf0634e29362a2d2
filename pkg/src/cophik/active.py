"""Greedy active learning: observe next wherever the posterior MSE is largest."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .branin import relative_error
from .cokriging import RhoSearchConfig, fit_cophik
from .gp import GpPosterior, NuggetPolicy
from .grid import Field, Grid, ObservationSet
from .kriging import OptimizerConfig, fit_hyperparameters
from .phik import Ensemble, fit_phik

log = logging.getLogger(__name__)

LEARNER_KINDS = ("kriging", "phik", "modified-phik", "cophik")


@dataclass(frozen=True)
class Learner:
    """Which regression method to use, with its settings.

    ``ensemble`` is required by the ensemble-based kinds and must be ``None``
    for ordinary Kriging.
    """

    kind: str
    ensemble: Ensemble | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    rho: RhoSearchConfig = field(default_factory=RhoSearchConfig)
    nugget: NuggetPolicy = field(default_factory=NuggetPolicy)
    workers: int = 1

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner {self.kind!r}; expected one of {LEARNER_KINDS}")
        if self.kind == "kriging" and self.ensemble is not None:
            raise ValueError("ordinary Kriging does not take an ensemble")
        if self.kind != "kriging" and self.ensemble is None:
            raise ValueError(f"learner {self.kind!r} needs an ensemble")

    def fit(self, grid: Grid, nodes, y):
        """Fit on observations at grid nodes; returns the fitted model."""
        nodes = np.asarray(nodes, dtype=int)
        y = np.asarray(y, dtype=float)
        if self.kind == "kriging":
            obs = ObservationSet(grid.nodes()[nodes], y)
            return fit_hyperparameters(obs, self.optimizer, self.nugget, extent=grid.extent)
        if self.ensemble.grid != grid:
            raise ValueError("ensemble grid differs from the prediction grid")
        if self.kind == "cophik":
            return fit_cophik(self.ensemble, nodes, y, self.rho, self.optimizer, self.nugget, workers=self.workers)
        return fit_phik(self.ensemble.gp(), nodes, y, modified=self.kind == "modified-phik", policy=self.nugget)


def predict_grid(model, grid: Grid) -> GpPosterior:
    if hasattr(model, "predict_nodes"):
        return model.predict_nodes(np.arange(grid.size))
    return model.predict(grid.nodes())


def prior_variance(model, nodes) -> np.ndarray:
    """Prior variance at grid nodes, for the interpolation checks."""
    nodes = np.atleast_1d(nodes)
    if hasattr(model, "sigma2_hat"):
        return np.full(nodes.shape, model.sigma2_hat)
    if hasattr(model, "prior_variance"):
        return model.prior_variance(nodes)
    return model.gp.variance(nodes)


def argmax_mse(mse, excluded=()) -> int:
    """Index of the largest MSE outside ``excluded``; ties go to the lowest index."""
    mse = np.asarray(mse.values if isinstance(mse, Field) else mse, dtype=float)
    masked = mse.copy()
    masked[np.asarray(list(excluded), dtype=int)] = -np.inf
    if np.all(masked == -np.inf):
        raise ValueError("every candidate node is excluded")
    return int(np.argmax(masked))


@dataclass
class Step:
    node: int
    location: tuple[float, ...]
    value: float
    max_mse: float
    rel_error: float  # after refitting with this observation


@dataclass
class LearningTrajectory:
    learner: str
    initial_nodes: list[int]
    initial_error: float
    steps: list[Step] = field(default_factory=list)
    mean: np.ndarray | None = None
    variance: np.ndarray | None = None
    failure: str | None = None

    @property
    def nodes(self) -> list[int]:
        return list(self.initial_nodes) + [s.node for s in self.steps]

    def error_curve(self) -> list[tuple[int, float]]:
        n0 = len(self.initial_nodes)
        return [(n0, self.initial_error)] + [(n0 + k + 1, s.rel_error) for k, s in enumerate(self.steps)]


def active_learn(
    learner: Learner,
    oracle: Callable[[int], float] | Field,
    grid: Grid,
    initial_nodes,
    n_max: int,
    reference: Field | None = None,
) -> LearningTrajectory:
    """Add observations one at a time at the current MSE maximiser until ``n_max``.

    ``oracle`` returns the true value at a node; when it is a :class:`Field` it
    also serves as the reference for the relative error. A failed refit stops
    the loop; the partial trajectory keeps the last successful posterior and
    has ``failure`` set.
    """
    if isinstance(oracle, Field):
        reference = reference or oracle
        values = oracle.values
        query = lambda node: float(values[node])  # noqa: E731
    else:
        query = oracle
    nodes = [int(n) for n in initial_nodes]
    if len(set(nodes)) != len(nodes):
        raise ValueError("initial observation nodes must be distinct")
    if n_max < len(nodes):
        raise ValueError(f"n_max={n_max} is below the initial observation count {len(nodes)}")
    y = [query(n) for n in nodes]

    def error(mean):
        return relative_error(mean, reference.values) if reference is not None else float("nan")

    post = predict_grid(learner.fit(grid, nodes, y), grid)
    traj = LearningTrajectory(learner.kind, list(nodes), error(post.mean))
    while len(nodes) < n_max:
        node = argmax_mse(post.variance, nodes)
        max_mse = float(post.variance[node])
        nodes.append(node)
        y.append(query(node))
        try:
            post = predict_grid(learner.fit(grid, nodes, y), grid)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.warning("%s refit failed at %d observations: %s", learner.kind, len(nodes), exc)
            traj.failure = str(exc)
            traj.steps.append(Step(node, tuple(grid.node(node)), y[-1], max_mse, float("nan")))
            break
        traj.steps.append(Step(node, tuple(grid.node(node)), y[-1], max_mse, error(post.mean)))
    traj.mean = post.mean
    traj.variance = post.variance
    return traj
