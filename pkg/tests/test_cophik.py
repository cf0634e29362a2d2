import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cophik.branin import branin_reference, generate_ensemble
from cophik.cokriging import (
    RhoSearchConfig,
    assemble_joint_cov,
    block_inverse_apply,
    cophik_predict,
    fit_cophik,
    fit_discrepancy,
    joint_log_likelihood,
    posterior_decomposition,
    select_y_l,
)
from cophik.gp import spd_factorize
from cophik.grid import Grid
from cophik.kriging import OptimizerConfig
from cophik.phik import Ensemble, fit_phik
from builders import manual_cophik
from oracles import dense_cophik, dense_concentrated_ll, dense_joint_ll


def spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + 0.5 * np.eye(n)


class TestJointCovariance:
    def test_rho_zero_block_diagonal(self, rng):
        C1, C2 = spd(rng, 2), spd(rng, 2)
        J = assemble_joint_cov(C1, C2, 0.0)
        assert_allclose(J, np.block([[C1, np.zeros((2, 2))], [np.zeros((2, 2)), C2]]))

    def test_identity_blocks(self):
        I = np.eye(3)
        assert_allclose(assemble_joint_cov(I, I, 1.0), np.block([[I, I], [I, 2 * I]]))

    def test_entrywise(self, rng):
        C1, C2, rho = spd(rng, 2), spd(rng, 2), 0.7
        J = assemble_joint_cov(C1, C2, rho)
        for i in range(2):
            for j in range(2):
                assert J[i, j] == C1[i, j]
                assert J[i, 2 + j] == rho * C1[i, j]
                assert J[2 + i, j] == rho * C1[i, j]
                assert J[2 + i, 2 + j] == pytest.approx(rho**2 * C1[i, j] + C2[i, j])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            assemble_joint_cov(np.eye(2), np.eye(3), 1.0)


class TestBlockInverse:
    def test_rho_zero(self, rng):
        C1, C2 = spd(rng, 3), spd(rng, 3)
        r = rng.normal(size=6)
        got = block_inverse_apply(spd_factorize(C1), spd_factorize(C2), 0.0, r)
        assert_allclose(got, np.concatenate([np.linalg.solve(C1, r[:3]), np.linalg.solve(C2, r[3:])]), rtol=1e-10)

    def test_identity_closed_form(self, rng):
        I = np.eye(3)
        rho = 1.3
        r = rng.normal(size=6)
        got = block_inverse_apply(spd_factorize(I), spd_factorize(I), rho, r)
        Jinv = np.block([[(1 + rho**2) * I, -rho * I], [-rho * I, I]])
        assert_allclose(got, Jinv @ r, rtol=1e-13)

    @pytest.mark.parametrize("rho", [0.0, 0.4, 1.0, 1.9])
    def test_dense_oracle(self, rng, rho):
        C1, C2 = spd(rng, 3), spd(rng, 3)
        r = rng.normal(size=(6, 2))
        got = block_inverse_apply(spd_factorize(C1), spd_factorize(C2), rho, r)
        expected = np.linalg.solve(assemble_joint_cov(C1, C2, rho), r)
        assert_allclose(got, expected, rtol=1e-8, atol=1e-12)

    def test_matched_nuggets(self, rng):
        v = rng.normal(size=3)
        C1 = np.outer(v, v)  # singular, forces a nugget
        C2 = spd(rng, 3)
        f1, f2 = spd_factorize(C1), spd_factorize(C2)
        assert f1.alpha > 0
        r = rng.normal(size=6)
        J = assemble_joint_cov(f1.matrix(), f2.matrix(), 0.8)
        got = block_inverse_apply(f1, f2, 0.8, r)
        # J is badly conditioned here, so compare backward error
        assert np.linalg.norm(J @ got - r) <= 1e-8 * np.linalg.norm(J, 2) * np.linalg.norm(got)

    def test_joint_likelihood_oracle(self, rng):
        C1, C2 = spd(rng, 3), spd(rng, 3)
        r = rng.normal(size=6)
        got = joint_log_likelihood(spd_factorize(C1), spd_factorize(C2), 1.2, r)
        assert got == pytest.approx(dense_joint_ll(C1, C2, 1.2, r), rel=1e-10)


class TestSelectYl:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.C1, self.C2 = spd(rng, 2), spd(rng, 2)
        self.f1, self.f2 = spd_factorize(self.C1), spd_factorize(self.C2)
        self.mu_l = rng.normal(size=2)
        self.y_h = rng.normal(size=2)
        self.rng = rng

    def test_single_member_two_candidates(self):
        cand = [self.rng.normal(size=2), self.mu_l]
        k, trace = select_y_l(cand, self.mu_l, self.y_h, self.f1, self.f2, 0.9, 0.1)
        assert len(trace) == 2 and k == int(np.argmax(trace))

    def test_tie_goes_to_lowest(self):
        c = self.rng.normal(size=2)
        k, _ = select_y_l([c, c.copy(), self.mu_l + 50.0], self.mu_l, self.y_h, self.f1, self.f2, 1.0, 0.0)
        assert k == 0

    def test_dense_oracle(self):
        cands = [self.rng.normal(size=2) for _ in range(3)] + [self.mu_l]
        rho, mu_d = 1.1, 0.3
        k, trace = select_y_l(cands, self.mu_l, self.y_h, self.f1, self.f2, rho, mu_d)
        dense = [
            dense_joint_ll(self.C1, self.C2, rho, np.concatenate([c - self.mu_l, self.y_h - rho * self.mu_l - mu_d]))
            for c in cands
        ]
        assert_allclose(trace, dense, rtol=1e-10)
        assert k == int(np.argmax(dense))


class TestDiscrepancy:
    X = np.linspace(0, 1, 6)[:, None]

    def test_exact_low_fidelity(self):
        mu_l = np.sin(3 * self.X[:, 0]) + 2.0
        fit = fit_discrepancy(self.X, mu_l, mu_l, ok_cfg=OptimizerConfig(starts=3))
        assert fit.rho == pytest.approx(1.0)
        assert fit.model.sigma2_hat == pytest.approx(0.0, abs=1e-20)
        assert fit.model.predict(self.X).mean == pytest.approx(np.zeros(6), abs=1e-12)

    def test_constant_offset(self):
        mu_l = np.sin(3 * self.X[:, 0]) + 2.0
        fit = fit_discrepancy(self.X, mu_l + 0.75, mu_l, ok_cfg=OptimizerConfig(starts=3))
        assert fit.rho == pytest.approx(1.0)
        assert fit.mu_d == pytest.approx(0.75, rel=1e-10)

    def test_ties_to_smaller_rho(self):
        mu_l = np.zeros(6)
        y = np.cos(2 * self.X[:, 0])
        fit = fit_discrepancy(self.X, y, mu_l, RhoSearchConfig(0.0, 2.0, 5), OptimizerConfig(starts=2))
        assert fit.rho == 0.0
        assert len({ll for _, ll in fit.trace}) == 1

    def test_planted_rho_against_exhaustive_grid(self):
        X = np.linspace(0, 1, 7)[:, None]
        x = X[:, 0]
        mu_l = np.sin(4 * x) + 1.5 * x
        y_h = 1.5 * mu_l + 0.2 * np.cos(2 * x)
        cfg = RhoSearchConfig()
        fit = fit_discrepancy(X, y_h, mu_l, cfg, extent=[1.0])
        log_l = np.linspace(math.log(1e-2), math.log(1e2), 161)
        best = []
        for rho in cfg.candidates():
            yd = y_h - rho * mu_l
            lls = []
            for t in log_l:
                try:
                    lls.append(dense_concentrated_ll(X, yd, [math.exp(t)]))
                except (ValueError, np.linalg.LinAlgError):
                    lls.append(-np.inf)
            best.append(np.nanmax(np.where(np.isfinite(lls), lls, -np.inf)))
        rho_oracle = cfg.candidates()[int(np.argmax(best))]
        assert abs(fit.rho - rho_oracle) <= 0.05 + 1e-12
        assert abs(fit.rho - 1.5) <= 0.25

    def test_interval_must_contain_one(self):
        with pytest.raises(ValueError):
            RhoSearchConfig(1.5, 2.0, 5)


@pytest.fixture(scope="module")
def tiny_case():
    g = Grid.uniform(2, 4)
    rng = np.random.default_rng(11)
    base = np.sin(3 * g.nodes()[:, 0]) + g.nodes()[:, 1]
    Y = base + 0.3 * rng.normal(size=(4, g.size))
    ens = Ensemble(g, Y)
    nodes = np.array([2, 9, 13])
    y_h = 1.2 * base[nodes] + 0.4
    return ens, nodes, y_h


class TestPosterior:
    @pytest.mark.parametrize("n_obs,members", [(2, 3), (3, 4)])
    def test_dense_oracle(self, tiny_case, n_obs, members):
        ens, nodes, y_h = tiny_case
        ens = Ensemble(ens.grid, ens.members[:members])
        nodes, y_h = nodes[:n_obs], y_h[:n_obs]
        model = fit_cophik(ens, nodes, y_h, ok_cfg=OptimizerConfig(starts=3))
        pts = ens.grid.nodes()
        for star in range(ens.grid.size):
            m, v = cophik_predict(model, star)
            em, ev = dense_cophik(
                ens.members, nodes, pts[nodes], y_h, model.y_l, model.rho, model.mu_d,
                model.sigma2_d, model.discrepancy.lengths, star, pts[star],
            )
            scale = np.max(np.abs(y_h))
            assert abs(m - em) <= 1e-8 * max(abs(em), scale)
            assert abs(v - max(ev, 0.0)) <= 1e-8 * max(abs(ev), model.prior_variance([star])[0])

    def test_interpolation(self, tiny_case):
        ens, nodes, y_h = tiny_case
        model = fit_cophik(ens, nodes, y_h, ok_cfg=OptimizerConfig(starts=3))
        assert model.nugget == (0.0, 0.0)
        post = model.predict_nodes(nodes)
        assert_allclose(post.mean, y_h, rtol=1e-8)
        assert np.all(post.variance <= 1e-8 * model.prior_variance(nodes))

    def test_rho_zero_zero_residual(self, tiny_case):
        ens, nodes, _ = tiny_case
        y_h = np.full(len(nodes), 2.0)
        model = manual_cophik(ens, nodes, y_h, ens.members[0, nodes], 0.0, (0.5, 0.5))
        assert_allclose(model.predict_nodes().mean, 2.0, rtol=1e-12)

    def test_selection_trace_soundness(self, tiny_case):
        ens, nodes, y_h = tiny_case
        model = fit_cophik(ens, nodes, y_h, ok_cfg=OptimizerConfig(starts=3))
        trace = model.selection_trace
        assert len(trace) == len(ens) + 1
        k = len(ens) if model.y_l_source == -1 else model.y_l_source
        assert trace[k] == max(trace)


@pytest.fixture(scope="module")
def branin_cophik():
    g = Grid.uniform(2, 21)
    ens = generate_ensemble(g, 50, seed=5)
    ref = branin_reference(g)
    nodes = np.array([17, 60, 130, 222, 301, 377, 415, 99])
    return ens, nodes, ref.values[nodes], fit_cophik(ens, nodes, ref.values[nodes])


class TestDecomposition:
    def test_sum_matches_posterior(self, branin_cophik):
        ens, _, _, model = branin_cophik
        query = np.random.default_rng(0).choice(ens.grid.size, size=200, replace=False)
        mean = model.predict_nodes(query).mean
        S1, S2, S3 = model.decomposition(query)
        assert_allclose(S1 - S2 + S3, mean, rtol=1e-8, atol=1e-8 * np.abs(mean).max())

    def test_scaled_phik_part(self, branin_cophik):
        ens, nodes, y, model = branin_cophik
        S1, _, _ = model.decomposition()
        phik = fit_phik(ens.gp(), nodes, y).mean_field()
        assert_allclose(S1 / model.rho, phik, rtol=1e-8, atol=1e-8 * np.abs(phik).max())

    def test_s2_vanishes_when_yl_equals_yh(self, tiny_case):
        ens, nodes, y_h = tiny_case
        model = manual_cophik(ens, nodes, y_h, y_h, 1.0, (0.5, 0.5))
        _, S2, _ = posterior_decomposition(model, 5)
        assert S2 == pytest.approx(0.0, abs=1e-12)

    def test_s3_is_mu_d_when_discrepancy_exact(self, tiny_case):
        ens, nodes, y_h = tiny_case
        rho = 0.8
        mu_d = 0.5
        y_l = (y_h - mu_d) / rho
        model = manual_cophik(ens, nodes, y_h, y_l, rho, (0.5, 0.5))
        # the kriging fit of y_h - rho mu_L gives its own mu_d; use that one
        y_l = (y_h - model.mu_d) / rho
        model = manual_cophik(ens, nodes, y_h, y_l, rho, (0.5, 0.5))
        _, _, S3 = posterior_decomposition(model, 7)
        assert S3 == pytest.approx(model.mu_d, rel=1e-10)
