import math

import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose

from cophik.branin import (
    B,
    G_HAT,
    N_XI,
    Q,
    branin,
    branin_realization,
    branin_reference,
    default_grid,
    generate_ensemble,
    random_coefficients,
    random_nodes,
    relative_error,
)
from cophik.grid import Field, Grid


def mp_branin(x, y):
    """Reference function at 50 digits."""
    mpmath.mp.dps = 50
    x, y = mpmath.mpf(x), mpmath.mpf(y)
    pi = mpmath.pi
    b, c, p = mpmath.mpf("5.1") / (4 * pi**2), 5 / pi, 1 / (8 * pi)
    X, Y = 15 * x - 5, 15 * y
    return (Y - b * X**2 + c * X - 6) ** 2 + 10 * (1 - p) * mpmath.cos(X) + 10 + 5 * x


class TestReference:
    def test_default_node_count(self):
        assert default_grid().size == 1681
        assert branin_reference(default_grid()).values.shape == (1681,)

    @pytest.mark.parametrize("x,y", [(0.0, 0.0), (1.0, 0.0), (0.3, 0.8)])
    def test_high_precision_oracle(self, x, y):
        assert float(branin(x, y)) == pytest.approx(float(mp_branin(x, y)), rel=1e-14)

    def test_not_symmetric(self):
        assert float(mp_branin(0, 0)) != pytest.approx(float(mp_branin(1, 0)), rel=1e-3)
        g = Grid.uniform(2, 3)
        f = branin_reference(g).values
        i0, i1 = (int(np.flatnonzero((g.nodes() == p).all(axis=1))[0]) for p in ([0.0, 0.0], [1.0, 0.0]))
        assert f[i0] != f[i1]
        assert f[i1] == pytest.approx(float(mp_branin(1, 0)), rel=1e-14)

    def test_seed_independent(self):
        g = Grid.uniform(2, 5)
        assert np.array_equal(branin_reference(g).values, branin_reference(g).values)

    def test_needs_two_dimensions(self):
        with pytest.raises(ValueError):
            branin_reference(Grid.uniform(1, 5))


class TestRealization:
    def test_zero_draws(self):
        g = Grid.uniform(2, 7)
        x, y = g.nodes().T
        got = branin_realization(g, np.zeros(N_XI)).values
        assert_allclose(got, branin(x, y, b=0.9 * B, g_add=G_HAT, q=Q), rtol=1e-14)

    def test_linear_in_xi(self, rng):
        x, y = rng.random((2, 20))
        xi = rng.normal(size=N_XI)
        b0, q0 = random_coefficients(x, y, np.zeros(N_XI))
        b1, q1 = random_coefficients(x, y, xi)
        b2, q2 = random_coefficients(x, y, 2 * xi)
        assert_allclose(b2 - b0, 2 * (b1 - b0), rtol=1e-12, atol=1e-15)
        assert_allclose(q2 - q0, 2 * (q1 - q0), rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("k", range(N_XI))
    def test_single_draw_term(self, k):
        """Only xi_{k+1} nonzero: the one matching series term survives."""
        x, y = 0.37, 0.81
        xi = np.zeros(N_XI)
        xi[k] = 1.7
        b_hat, q_hat = random_coefficients(np.array([x]), np.array([y]), xi)
        i = k + 1  # 1-based draw index
        db = dq = 0.0
        if i <= 6:
            j = (i + 1) // 2
            if i % 2:
                db = math.sin((2 * j - 0.5) * math.pi * x) / (4 * j - 1)
            else:
                db = math.sin((2 * j + 0.5) * math.pi * y) / (4 * j + 1)
        else:
            j = (i - 5) // 2
            if i % 2:
                dq = math.cos((2 * j - 1.5) * math.pi * x) / (4 * j - 3)
            else:
                dq = math.cos((2 * j - 0.5) * math.pi * y) / (4 * j - 1)
        assert b_hat[0] == pytest.approx(B * (0.9 + 0.2 / math.pi * 1.7 * db), rel=1e-14)
        assert q_hat[0] == pytest.approx(Q * (1.0 + 0.6 / math.pi * 1.7 * dq), rel=1e-14)

    @pytest.mark.parametrize("n", [11, 13])
    def test_wrong_draw_count(self, n):
        with pytest.raises(ValueError):
            branin_realization(Grid.uniform(2, 3), np.zeros(n))


class TestEnsemble:
    def test_deterministic(self):
        g = Grid.uniform(2, 5)
        a = generate_ensemble(g, 4, seed=9)
        b = generate_ensemble(g, 4, seed=9)
        assert np.array_equal(a.members, b.members)
        assert not np.array_equal(a.members, generate_ensemble(g, 4, seed=10).members)

    def test_prefix_stable(self):
        # member m depends only on (seed, m)
        g = Grid.uniform(2, 5)
        assert np.array_equal(generate_ensemble(g, 3, 2).members, generate_ensemble(g, 6, 2).members[:3])

    def test_members_differ_from_reference(self, branin_small):
        ref, ens = branin_small
        assert min(relative_error(Field(ref.grid, m), ref) for m in ens.members) > 0.01

    def test_needs_two_members(self):
        with pytest.raises(ValueError):
            generate_ensemble(Grid.uniform(2, 3), 1, 0)

    def test_random_nodes(self):
        g = default_grid()
        n = random_nodes(g, 8, seed=0)
        assert len(set(n.tolist())) == 8 and np.array_equal(n, random_nodes(g, 8, seed=0))


class TestRelativeError:
    def test_trivial(self, rng):
        g = Grid.uniform(1, 6)
        F = Field(g, rng.normal(size=6))
        assert relative_error(F, F) == 0.0
        assert relative_error(Field(g, 2 * F.values), F) == pytest.approx(1.0)

    def test_double_loop_oracle(self, rng):
        g = Grid.uniform(2, 4)
        a, b = rng.normal(size=(2, 4, 4))
        num = den = 0.0
        for i in range(4):
            for j in range(4):
                num += (a[i, j] - b[i, j]) ** 2
                den += b[i, j] ** 2
        assert relative_error(Field(g, a.ravel()), Field(g, b.ravel())) == pytest.approx(math.sqrt(num / den), rel=1e-13)

    def test_errors(self):
        g = Grid.uniform(1, 3)
        with pytest.raises(ValueError):
            relative_error(Field(g, np.ones(3)), Field(g, np.zeros(3)))
        with pytest.raises(ValueError):
            relative_error(Field(g, np.ones(3)), Field(Grid.uniform(1, 4), np.ones(4)))
