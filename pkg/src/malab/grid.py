"""Grids, sampled fields and lattice vectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .exceptions import GridError


@dataclass(frozen=True)
class BoxGrid:
    """Uniform Cartesian grid on the cube ``[-L, L]^n``.

    Parameters
    ----------
    dim : int
        Space dimension, 2 or 3.
    half_width : float
        ``L``; the domain is ``[-L, L]^dim``.
    nodes_per_axis : int
        ``m >= 8`` nodes per axis, including both boundary nodes.
    """

    dim: int
    half_width: float
    nodes_per_axis: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        if not self.half_width > 0:
            raise GridError("half_width must be positive")
        if self.nodes_per_axis < 8:
            raise GridError("insufficient grid: nodes_per_axis must be >= 8")

    periodic = False

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.nodes_per_axis - 1)

    @property
    def spacings(self) -> tuple:
        return (self.spacing,) * self.dim

    @property
    def shape(self) -> tuple:
        return (self.nodes_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.nodes_per_axis**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        # -L + k h, so coordinates depend only on (L, m)
        return -self.half_width + self.spacing * np.arange(self.nodes_per_axis)

    def coords(self) -> list:
        """Coordinate arrays, one per axis, each of shape ``self.shape``."""
        return np.meshgrid(*([self.axis] * self.dim), indexing="ij")

    def points(self) -> np.ndarray:
        """All node coordinates as an ``(size, dim)`` array (row-major order)."""
        return np.stack([c.ravel() for c in self.coords()], axis=-1)

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.coords()))

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        sl = tuple(slice(margin, self.nodes_per_axis - margin) for _ in range(self.dim))
        mask[sl] = True
        return mask

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask(1)

    def interior_slices(self, margin: int = 1) -> tuple:
        if self.nodes_per_axis - 2 * margin < 1:
            raise GridError("insufficient grid")
        return tuple(slice(margin, self.nodes_per_axis - margin) for _ in range(self.dim))

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        """Sample ``func(points) -> values`` at every node."""
        vals = np.asarray(func(self.points()), dtype=float).reshape(self.shape)
        return ScalarField(self, vals)

    def index_of(self, x: Sequence[float]) -> tuple:
        """Index of the node at coordinate ``x`` (must be a node)."""
        k = (np.asarray(x, dtype=float) + self.half_width) / self.spacing
        kr = np.rint(k)
        if np.any(np.abs(k - kr) > 1e-9) or np.any(kr < 0) or np.any(kr >= self.nodes_per_axis):
            raise GridError(f"point {x} is not a grid node")
        return tuple(int(v) for v in kr)


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the periodic cell ``[0, a_1) x ... x [0, a_n)``."""

    dim: int
    periods: tuple
    nodes: tuple

    def __post_init__(self):
        periods = tuple(float(a) for a in np.broadcast_to(self.periods, (self.dim,)))
        nodes = tuple(int(m) for m in np.broadcast_to(self.nodes, (self.dim,)))
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "nodes", nodes)
        if self.dim < 1:
            raise GridError("dim must be positive")
        if any(a <= 0 for a in periods):
            raise GridError("periods must be positive")
        if any(m < 4 for m in nodes):
            raise GridError("insufficient grid: need at least 4 nodes per period")

    periodic = True

    @property
    def spacings(self) -> tuple:
        return tuple(a / m for a, m in zip(self.periods, self.nodes))

    @property
    def shape(self) -> tuple:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.periods))

    def axes(self) -> list:
        return [h * np.arange(m) for h, m in zip(self.spacings, self.nodes)]

    def coords(self) -> list:
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        return np.stack([c.ravel() for c in self.coords()], axis=-1)

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        vals = np.asarray(func(self.points()), dtype=float).reshape(self.shape)
        return ScalarField(self, vals)

    def wrap(self, index: Sequence[int]) -> tuple:
        return tuple(int(k) % m for k, m in zip(index, self.nodes))


@dataclass
class ScalarField:
    """One value per grid node."""

    grid: BoxGrid | PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(self.grid.shape):
            if self.values.size != self.grid.size:
                raise GridError(
                    f"value count {self.values.size} does not match node count {self.grid.size}"
                )
            self.values = self.values.reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite values in ScalarField")

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass
class SymMatrixField:
    """A symmetric ``n x n`` matrix at every node with a full stencil.

    ``margin`` is the number of node layers stripped from each side of a box
    grid (zero for periodic grids), so ``values[k]`` belongs to node
    ``k + margin``.
    """

    grid: BoxGrid | PeriodicGrid
    values: np.ndarray
    margin: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        # upper triangle is authoritative
        iu = np.triu_indices(v.shape[-1], 1)
        v[..., iu[1], iu[0]] = v[..., iu[0], iu[1]]
        self.values = v

    @property
    def node_shape(self) -> tuple:
        return self.values.shape[:-2]


@dataclass(frozen=True)
class LatticeVector:
    """Integer combination ``e = sum_i k_i a_i e_i`` of the period vectors."""

    coefficients: tuple
    periods: tuple = field(default=None)

    def __post_init__(self):
        k = tuple(int(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", k)
        a = (1.0,) * len(k) if self.periods is None else tuple(float(p) for p in self.periods)
        if len(a) != len(k):
            raise GridError("periods and coefficients differ in length")
        object.__setattr__(self, "periods", a)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.coefficients, dtype=float) * np.array(self.periods)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def node_offset(self, spacings: Sequence[float]) -> tuple:
        """Displacement in nodes; raises if ``e`` is not commensurate with the grid."""
        off = self.vector / np.asarray(spacings, dtype=float)
        r = np.rint(off)
        if np.any(np.abs(off - r) > 1e-9 * np.maximum(1.0, np.abs(off))):
            raise GridError("stencil out of range: lattice vector not commensurate with spacing")
        return tuple(int(v) for v in r)


def shrink(grid: BoxGrid, layers: int) -> BoxGrid:
    """Sub-grid made of the nodes at least ``layers`` away from the boundary."""
    m = grid.nodes_per_axis - 2 * layers
    if m < 1:
        raise GridError("insufficient grid")
    h = grid.spacing
    # bypass the m >= 8 guard: sub-grids only carry derived quantities
    sub = object.__new__(BoxGrid)
    object.__setattr__(sub, "dim", grid.dim)
    object.__setattr__(sub, "half_width", grid.half_width - layers * h)
    object.__setattr__(sub, "nodes_per_axis", m)
    return sub
