"""Modified Branin reference field and its stochastic model.

The reference function on ``[0, 1]^2`` is

    f(x, y) = a (Y - b X^2 + c X - r)^2 + g (1 - p) cos(X) + g + q x,
    X = 15 x - 5,  Y = 15 y,

and the stochastic model replaces ``b`` and ``q`` by random fields that are
truncated sine/cosine series in twelve iid standard normals, and the
additive ``g`` by ``g_hat = 20``.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import Field, Grid
from .phik import Ensemble

A = 1.0
B = 5.1 / (4.0 * math.pi**2)
C = 5.0 / math.pi
R = 6.0
G = 10.0
P = 1.0 / (8.0 * math.pi)
Q = 5.0
G_HAT = 20.0
N_XI = 12

# seed-sequence entropy tags that keep the ensemble and observation streams apart
ENSEMBLE_STREAM = 0
OBSERVATION_STREAM = 1
GENERATOR = "numpy.random.PCG64 via SeedSequence([seed, stream], spawn_key=(member,)); standard_normal"


def default_grid(n: int = 41) -> Grid:
    return Grid.uniform(2, n)


def _coords(grid: Grid):
    if grid.dim != 2:
        raise ValueError("the Branin benchmark is two-dimensional")
    pts = grid.nodes()
    return pts[:, 0], pts[:, 1]


def branin(x, y, b=B, g_add=G, q=Q):
    xb = 15.0 * np.asarray(x) - 5.0
    yb = 15.0 * np.asarray(y)
    return A * (yb - b * xb**2 + C * xb - R) ** 2 + G * (1.0 - P) * np.cos(xb) + g_add + q * np.asarray(x)


def branin_reference(grid: Grid) -> Field:
    x, y = _coords(grid)
    return Field(grid, branin(x, y))


def random_coefficients(x, y, xi) -> tuple[np.ndarray, np.ndarray]:
    """The random fields ``b_hat(x; xi)`` and ``q_hat(x; xi)``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (N_XI,):
        raise ValueError(f"expected {N_XI} standard-normal draws, got shape {xi.shape}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sb = np.zeros_like(x)
    sq = np.zeros_like(x)
    for i in range(1, 4):
        sb += np.sin((2 * i - 0.5) * math.pi * x) * xi[2 * i - 2] / (4 * i - 1)
        sb += np.sin((2 * i + 0.5) * math.pi * y) * xi[2 * i - 1] / (4 * i + 1)
        sq += np.cos((2 * i - 1.5) * math.pi * x) * xi[2 * i + 4] / (4 * i - 3)
        sq += np.cos((2 * i - 0.5) * math.pi * y) * xi[2 * i + 5] / (4 * i - 1)
    return B * (0.9 + 0.2 / math.pi * sb), Q * (1.0 + 0.6 / math.pi * sq)


def branin_realization(grid: Grid, xi) -> Field:
    x, y = _coords(grid)
    b_hat, q_hat = random_coefficients(x, y, xi)
    return Field(grid, branin(x, y, b=b_hat, g_add=G_HAT, q=q_hat))


def member_draws(seed: int, m: int) -> np.ndarray:
    ss = np.random.SeedSequence([seed, ENSEMBLE_STREAM], spawn_key=(m,))
    return np.random.Generator(np.random.PCG64(ss)).standard_normal(N_XI)


def generate_ensemble(grid: Grid, M: int, seed: int) -> Ensemble:
    """``M`` realizations; member ``m`` uses its own counter-derived substream."""
    if M < 2:
        raise ValueError("an ensemble needs at least two members")
    x, y = _coords(grid)
    members = np.empty((M, grid.size))
    for m in range(M):
        b_hat, q_hat = random_coefficients(x, y, member_draws(seed, m))
        members[m] = branin(x, y, b=b_hat, g_add=G_HAT, q=q_hat)
    return Ensemble(grid, members)


def random_nodes(grid: Grid, n: int, seed: int) -> np.ndarray:
    """``n`` distinct grid nodes drawn uniformly without replacement."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, OBSERVATION_STREAM])))
    return np.sort(rng.choice(grid.size, size=n, replace=False))


def relative_error(Fr, F) -> float:
    """Relative Frobenius error ``||Fr - F|| / ||F||`` over all grid nodes."""
    if isinstance(Fr, Field) and isinstance(F, Field) and Fr.grid != F.grid:
        raise ValueError("fields live on different grids")
    fr = Fr.values if isinstance(Fr, Field) else np.asarray(Fr, dtype=float)
    f = F.values if isinstance(F, Field) else np.asarray(F, dtype=float)
    if fr.shape != f.shape:
        raise ValueError("fields have different sizes")
    norm = float(np.linalg.norm(f))
    if norm == 0:
        raise ValueError("reference field has zero norm")
    return float(np.linalg.norm(fr - f)) / norm
