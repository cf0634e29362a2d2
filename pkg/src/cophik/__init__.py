"""Kriging, physics-informed Kriging (PhIK) and CoPhIK on structured grids."""

from .active import LEARNER_KINDS, Learner, LearningTrajectory, active_learn, argmax_mse
from .bench import BenchmarkConfig, BenchmarkReport, run_benchmark
from .bounds import BoundReport, constraint_data, make_operator, theorem1_bound, theorem2_bound
from .branin import branin_realization, branin_reference, generate_ensemble, random_nodes, relative_error
from .cokriging import CoPhikModel, RhoSearchConfig, cophik_predict, fit_cophik, posterior_decomposition
from .gp import (
    FactorizationError,
    GaussianKernelParams,
    GpPosterior,
    NuggetPolicy,
    SpdFactorization,
    gaussian_kernel,
    gp_posterior,
    log_marginal_likelihood,
    spd_factorize,
)
from .grid import Field, Grid, ObservationSet, OffGridError
from .kriging import OptimizerConfig, OrdinaryKrigingModel, fit_hyperparameters, mle_mean_variance, ok_predict
from .phik import (
    Ensemble,
    EnsembleGp,
    PhikModel,
    TwoLevelEnsemble,
    fit_phik,
    mlmc_cov,
    mlmc_mean,
    mlmc_predict,
    modified_phik_predict,
    phik_predict,
)

__version__ = "0.1.0"
