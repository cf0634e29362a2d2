"""Structured grids, fields on grids and observation sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OffGridError(ValueError):
    """A location does not coincide with a grid node."""


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid over a box.

    Nodes are ordered row-major over the axes in declared order, i.e. the
    last axis varies fastest (numpy C order on ``shape``).
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        counts = tuple(int(v) for v in self.counts)
        if not (len(lower) == len(upper) == len(counts)) or len(counts) == 0:
            raise ValueError("lower, upper and counts must have the same nonzero length")
        for lo, hi, n in zip(lower, upper, counts):
            if not lo < hi:
                raise ValueError(f"axis bounds must satisfy lower < upper, got {lo}:{hi}")
            if n < 2:
                raise ValueError(f"each axis needs at least 2 nodes, got {n}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def uniform(cls, dim: int, n: int, lower: float = 0.0, upper: float = 1.0) -> "Grid":
        return cls((lower,) * dim, (upper,) * dim, (n,) * dim)

    @classmethod
    def parse(cls, spec: str) -> "Grid":
        """Parse ``lo:hi:n,lo:hi:n,...`` (one triple per axis)."""
        lower, upper, counts = [], [], []
        for part in spec.split(","):
            try:
                lo, hi, n = part.split(":")
                lower.append(float(lo))
                upper.append(float(hi))
                counts.append(int(n))
            except ValueError as exc:
                raise ValueError(f"bad grid axis spec {part!r}; expected lo:hi:n") from exc
        return cls(tuple(lower), tuple(upper), tuple(counts))

    def spec(self) -> str:
        return ",".join(f"{lo!r}:{hi!r}:{n}" for lo, hi, n in zip(self.lower, self.upper, self.counts))

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def spacing(self) -> np.ndarray:
        return self.extent / (np.asarray(self.counts) - 1)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.counts)]

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(size, dim)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def node(self, index: int) -> np.ndarray:
        multi = np.unravel_index(int(index), self.counts)
        return np.array([ax[i] for ax, i in zip(self.axes(), multi)])

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tol = 1e-12 * self.extent
        return np.all((pts >= np.asarray(self.lower) - tol) & (pts <= np.asarray(self.upper) + tol), axis=1)

    def nearest(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Nearest node index for each point and the Euclidean snap distance."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"points have dimension {pts.shape[1]}, grid has {self.dim}")
        frac = (pts - np.asarray(self.lower)) / self.spacing
        multi = np.clip(np.rint(frac).astype(int), 0, np.asarray(self.counts) - 1)
        idx = np.ravel_multi_index(tuple(multi.T), self.counts)
        snapped = np.asarray(self.lower) + multi * self.spacing
        return np.asarray(idx, dtype=int), np.linalg.norm(pts - snapped, axis=1)

    def locate(self, points, rtol: float = 1e-9) -> np.ndarray:
        """Node indices of points that must lie on nodes (within ``rtol`` of the spacing)."""
        idx, dist = self.nearest(points)
        bad = dist > rtol * float(np.min(self.spacing))
        if np.any(bad):
            first = np.atleast_2d(points)[np.argmax(bad)]
            raise OffGridError(f"location {tuple(first)} is not a grid node")
        return idx


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size != self.grid.size:
            raise ValueError(f"field has {values.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Noiseless observations ``y`` at distinct locations ``X``."""

    locations: np.ndarray
    values: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.array(self.locations, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.values, dtype=float).ravel()
        if X.shape[0] == 0:
            raise ValueError("an observation set needs at least one observation")
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} locations but {y.size} values")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("observation locations and values must be finite")
        if np.unique(X, axis=0).shape[0] != X.shape[0]:
            raise ValueError("observation locations must be pairwise distinct")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "locations", X)
        object.__setattr__(self, "values", y)

    @classmethod
    def at_nodes(cls, grid: Grid, nodes, values) -> "ObservationSet":
        return cls(grid.nodes()[np.asarray(nodes, dtype=int)], values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def check_inside(self, grid: Grid) -> None:
        if self.dim != grid.dim:
            raise ValueError(f"observations are {self.dim}-D, grid is {grid.dim}-D")
        if not np.all(grid.contains(self.locations)):
            raise ValueError("observation locations must lie inside the domain box")
