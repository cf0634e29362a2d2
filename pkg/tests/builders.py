"""Hand-assembled models for tests that need rho or the discrepancy fixed."""

import numpy as np

from cophik.cokriging import CoPhikModel, DiscrepancyFit
from cophik.gp import gaussian_correlation, spd_factorize
from cophik.grid import ObservationSet
from cophik.kriging import build_model
from cophik.phik import ensemble_cov_matrix


def manual_cophik(ens, nodes, y_h, y_l, rho, lengths):
    """CoPhIK model with ``rho`` and the discrepancy lengths chosen by hand."""
    nodes = np.asarray(nodes)
    y_h = np.asarray(y_h, dtype=float)
    gp = ens.gp()
    X = ens.grid.nodes()[nodes]
    disc = DiscrepancyFit(rho, build_model(ObservationSet(X, y_h - rho * gp.mean[nodes]), lengths))
    f1 = spd_factorize(ensemble_cov_matrix(gp, nodes))
    f2 = spd_factorize(disc.sigma2_d * gaussian_correlation(X, X, lengths))
    return CoPhikModel(gp, nodes, y_h, np.asarray(y_l, dtype=float), 0, rho, disc, f1, f2)
