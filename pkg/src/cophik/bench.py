"""End-to-end modified-Branin experiment for all learners."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .active import LEARNER_KINDS, Learner, LearningTrajectory, active_learn
from .branin import branin_reference, default_grid, generate_ensemble, random_nodes, relative_error
from .cokriging import RhoSearchConfig
from .gp import NuggetPolicy
from .grid import Field, Grid
from .kriging import OptimizerConfig
from .phik import Ensemble

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchmarkConfig:
    grid: Grid = field(default_factory=default_grid)
    members: int = 300
    n_init: int = 8
    n_max: int = 24
    seed: int = 0
    learners: tuple[str, ...] = LEARNER_KINDS
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    rho: RhoSearchConfig = field(default_factory=RhoSearchConfig)
    nugget: NuggetPolicy = field(default_factory=NuggetPolicy)
    workers: int = 1

    def __post_init__(self):
        if self.n_max < self.n_init:
            raise ValueError("n_max must be at least n_init")
        unknown = set(self.learners) - set(LEARNER_KINDS)
        if unknown:
            raise ValueError(f"unknown learners: {sorted(unknown)}")

    def learner(self, kind: str, ensemble: Ensemble) -> Learner:
        return Learner(
            kind,
            None if kind == "kriging" else ensemble,
            self.optimizer,
            self.rho,
            self.nugget,
            self.workers,
        )


@dataclass
class BenchmarkReport:
    config: BenchmarkConfig
    reference: Field
    ensemble: Ensemble
    initial_nodes: np.ndarray
    trajectories: dict[str, LearningTrajectory]

    def ensemble_mean_error(self) -> float:
        return relative_error(self.ensemble.mean(), self.reference.values)

    def initial_errors(self) -> dict[str, float]:
        return {k: t.initial_error for k, t in self.trajectories.items()}

    def final_errors(self) -> dict[str, float]:
        return {k: t.error_curve()[-1][1] for k, t in self.trajectories.items()}

    def error_rows(self) -> list[tuple[str, int, float]]:
        return [(k, n, e) for k, t in self.trajectories.items() for n, e in t.error_curve()]


def run_benchmark(cfg: BenchmarkConfig | None = None, ensemble: Ensemble | None = None) -> BenchmarkReport:
    """Run every configured learner from the same seeded initial design."""
    cfg = cfg or BenchmarkConfig()
    reference = branin_reference(cfg.grid)
    if ensemble is None:
        ensemble = generate_ensemble(cfg.grid, cfg.members, cfg.seed)
    nodes = random_nodes(cfg.grid, cfg.n_init, cfg.seed)
    trajectories = {}
    for kind in cfg.learners:
        log.info("benchmark seed %d: %s, %d -> %d observations", cfg.seed, kind, cfg.n_init, cfg.n_max)
        trajectories[kind] = active_learn(cfg.learner(kind, ensemble), reference, cfg.grid, nodes, cfg.n_max)
    return BenchmarkReport(cfg, reference, ensemble, nodes, trajectories)
