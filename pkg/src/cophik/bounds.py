"""Numerical check of the linear-constraint error bounds.

For a linear operator ``L`` and per-member right-hand sides ``g^m`` with
``||L Y^m - g^m|| <= eps``, the modified-PhIK and CoPhIK posterior means
satisfy an a priori bound on ``||L y_hat - mean(g)||``. This module evaluates
both sides of those bounds on a grid. Field norms are RMS over the
operator's output nodes; matrix norms are spectral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cokriging import CoPhikModel
from .gp import SpdFactorization
from .grid import Grid
from .phik import Ensemble, PhikModel


def rms(values) -> np.ndarray:
    """RMS over the last axis."""
    v = np.asarray(values, dtype=float)
    return np.sqrt(np.mean(v * v, axis=-1))


class LinearOperator:
    """A discrete linear operator acting on fields over ``grid``.

    ``apply`` maps ``(..., grid.size)`` arrays to ``(..., n_out)`` arrays.
    """

    name = "operator"

    def __init__(self, grid: Grid):
        self.grid = grid

    def apply(self, values) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return self.name


class PointEvaluation(LinearOperator):
    name = "point"

    def __init__(self, grid: Grid, nodes):
        super().__init__(grid)
        self.nodes = np.asarray(nodes, dtype=int)
        if self.nodes.size == 0:
            raise ValueError("point evaluation needs at least one node")

    def apply(self, values):
        return np.asarray(values, dtype=float)[..., self.nodes]

    def describe(self):
        return "point:" + ",".join(str(int(n)) for n in self.nodes)


class PartialDerivative(LinearOperator):
    """Second-order central difference along one axis, on interior nodes of that axis."""

    def __init__(self, grid: Grid, axis: int):
        super().__init__(grid)
        if not 0 <= axis < grid.dim:
            raise ValueError(f"axis {axis} out of range for a {grid.dim}-D grid")
        if grid.counts[axis] < 3:
            raise ValueError("central differences need at least 3 nodes along the axis")
        self.axis = axis
        self.name = "d" + "xyzw"[axis] if axis < 4 else f"d{axis}"

    def apply(self, values):
        v = np.asarray(values, dtype=float)
        lead = v.shape[:-1]
        v = v.reshape(lead + self.grid.shape)
        ax = len(lead) + self.axis
        n = self.grid.counts[self.axis]
        hi = np.take(v, np.arange(2, n), axis=ax)
        lo = np.take(v, np.arange(0, n - 2), axis=ax)
        out = (hi - lo) / (2.0 * self.grid.spacing[self.axis])
        return out.reshape(lead + (-1,))


class Laplacian(LinearOperator):
    """Standard (2d+1)-point Laplacian on fully interior nodes."""

    name = "laplacian"

    def __init__(self, grid: Grid):
        super().__init__(grid)
        if min(grid.counts) < 3:
            raise ValueError("the Laplacian needs at least 3 nodes per axis")

    def apply(self, values):
        v = np.asarray(values, dtype=float)
        lead = v.shape[:-1]
        v = v.reshape(lead + self.grid.shape)
        inner = tuple(slice(1, -1) for _ in range(self.grid.dim))
        out = np.zeros(lead + tuple(n - 2 for n in self.grid.counts))
        for k in range(self.grid.dim):
            ax = len(lead) + k
            n = self.grid.counts[k]
            h2 = self.grid.spacing[k] ** 2
            center = v[(...,) + inner]
            plus = np.take(v, np.arange(2, n), axis=ax)
            minus = np.take(v, np.arange(0, n - 2), axis=ax)
            sl = tuple(slice(1, -1) if j != k else slice(None) for j in range(self.grid.dim))
            out += (plus[(...,) + sl] - 2.0 * center + minus[(...,) + sl]) / h2
        return out.reshape(lead + (-1,))


def make_operator(grid: Grid, spec: str) -> LinearOperator:
    """``dx``, ``dy`` (or ``d0``, ``d1``...), ``laplacian`` or ``point:i,j,...``."""
    spec = spec.strip()
    if spec.startswith("point:"):
        return PointEvaluation(grid, [int(s) for s in spec[6:].split(",") if s])
    if spec == "laplacian":
        return Laplacian(grid)
    named = {"dx": 0, "dy": 1, "dz": 2}
    if spec in named:
        return PartialDerivative(grid, named[spec])
    if spec.startswith("d") and spec[1:].isdigit():
        return PartialDerivative(grid, int(spec[1:]))
    raise ValueError(f"unknown operator {spec!r}")


@dataclass(frozen=True, eq=False)
class ConstraintData:
    """Right-hand sides ``g^m`` on the operator's output nodes, one row per member."""

    g: np.ndarray
    epsilon: float
    epsilon_source: str

    @property
    def g_mean(self) -> np.ndarray:
        return self.g.mean(axis=0)

    def g_spread(self) -> float:
        """``sqrt(1/(M-1) sum_m ||g^m - mean(g)||^2)``."""
        M = self.g.shape[0]
        dev = rms(self.g - self.g_mean)
        return math.sqrt(float(dev @ dev) / (M - 1))


def constraint_data(op: LinearOperator, ens: Ensemble, g=None, epsilon: float | None = None) -> ConstraintData:
    """Bundle right-hand sides with a tolerance.

    ``g=None`` takes ``g^m = L Y^m`` (constraint exact by construction). A
    missing ``epsilon`` is estimated as ``max_m ||L Y^m - g^m||``.
    """
    LY = op.apply(ens.members)
    g = LY if g is None else np.asarray(g, dtype=float)
    if g.shape != LY.shape:
        raise ValueError(f"right-hand sides have shape {g.shape}, expected {LY.shape}")
    if epsilon is None:
        return ConstraintData(g, float(np.max(rms(LY - g))), "estimated")
    return ConstraintData(g, float(epsilon), "user")


def inverse_norm(fact: SpdFactorization) -> float:
    """Spectral norm of the inverse of the regularised matrix, ``1 / lambda_min``."""
    lam = np.linalg.eigvalsh(fact.matrix())
    return 1.0 / float(lam[0])


def operator_norm_terms(ens: Ensemble, nodes, fact: SpdFactorization, residual) -> tuple[np.ndarray, float, float]:
    """Ensemble spreads at the observation nodes, ``||C^-1||_2`` and ``||residual||_2``."""
    sigmas = ens.members[:, np.asarray(nodes, dtype=int)].std(axis=0, ddof=1)
    return sigmas, inverse_norm(fact), float(np.linalg.norm(residual))


@dataclass
class BoundReport:
    theorem: str
    operator: str
    lhs: float
    terms: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def rhs(self) -> float:
        return float(sum(self.terms.values()))

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs

    def as_dict(self) -> dict:
        out = {"theorem": self.theorem, "operator": self.operator, "lhs": self.lhs}
        out.update({f"term_{k}": v for k, v in self.terms.items()})
        out["rhs"] = self.rhs
        out["pass"] = self.passed
        out["flags"] = ",".join(self.flags) if self.flags else "none"
        return out


def _constant_term(op: LinearOperator, c: float) -> float:
    return float(rms(op.apply(np.full(op.grid.size, c))))


def theorem1_bound(ens: Ensemble, model: PhikModel, op: LinearOperator, cdata: ConstraintData) -> BoundReport:
    """Both sides of the modified-PhIK bound (plain PhIK when ``delta_mu == 0``)."""
    M = len(ens)
    eps = cdata.epsilon
    lhs = float(rms(op.apply(model.mean_field()) - cdata.g_mean))
    sigmas, inv, res = operator_norm_terms(ens, model.nodes, model.fact, model.residual())
    spread = (2.0 * eps * math.sqrt(M / (M - 1)) + cdata.g_spread()) * inv * res * float(np.sum(sigmas))
    terms = {
        "epsilon": eps,
        "ensemble_spread": spread,
        "mean_shift": _constant_term(op, model.delta_mu),
    }
    return BoundReport("modified-phik", op.describe(), lhs, terms)


def theorem2_bound(ens: Ensemble, model: CoPhikModel, op: LinearOperator, cdata: ConstraintData) -> BoundReport:
    """Both sides of the CoPhIK bound.

    The ``(1 - rho) ||mean(g)||`` term is evaluated as written; it is negative
    for ``rho > 1``, which is flagged in the report.
    """
    M = len(ens)
    eps = cdata.epsilon
    rho = model.rho
    lhs = float(rms(op.apply(model.predict_nodes().mean) - cdata.g_mean))
    sigmas, inv1, res1 = operator_norm_terms(ens, model.nodes, model.f1, model.y_l - model.mu_l())
    inv2 = inverse_norm(model.f2)
    res2 = float(np.linalg.norm(model.y_h - rho * model.y_l - model.mu_d))
    kd_cols = model.kd(ens.grid.nodes()).T  # (N, grid.size)
    kd_norms = rms(op.apply(kd_cols))
    terms = {
        "rho_epsilon": rho * eps,
        "rho_mismatch": (1.0 - rho) * float(rms(cdata.g_mean)),
        "ensemble_spread": rho * (2.0 * eps * math.sqrt(M / (M - 1)) + cdata.g_spread())
        * inv1 * res1 * float(np.sum(sigmas)),
        "discrepancy_mean": _constant_term(op, model.mu_d),
        "discrepancy_kernel": inv2 * res2 * float(np.sum(kd_norms)),
    }
    flags = ["rho_gt_1_negative_term"] if rho > 1 else []
    return BoundReport("cophik", op.describe(), lhs, terms, flags)
