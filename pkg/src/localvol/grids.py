"""Grids, sampled fields, and interval arithmetic for the 1D solvers.

Space grids may be non-uniform; all derivative stencils elsewhere in the
package consume the per-cell widths exposed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import GridError, ValidationError


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi] on the real line."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValidationError(f"interval bounds must be finite, got ({self.lo}, {self.hi})")
        if not self.lo < self.hi:
            raise ValidationError(f"interval requires lo < hi, got ({self.lo}, {self.hi})")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, tol: float = 0.0):
        return (x >= self.lo - tol) & (x <= self.hi + tol)

    def strictly_inside(self, other: "Interval") -> bool:
        """True if self is compactly contained in other (positive gaps)."""
        return other.lo < self.lo and self.hi < other.hi

    def subset_of(self, other: "Interval", tol: float = 1e-12) -> bool:
        return other.lo - tol <= self.lo and self.hi <= other.hi + tol

    def overlaps(self, other: "Interval") -> bool:
        return self.lo < other.hi and other.lo < self.hi

    def scaled(self, factor: float) -> "Interval":
        """Interval with the same midpoint and length scaled by factor."""
        half = 0.5 * self.length * factor
        return Interval(self.mid - half, self.mid + half)


def _as_nodes(nodes) -> np.ndarray:
    arr = np.asarray(nodes, dtype=float)
    if arr.ndim != 1:
        raise GridError(f"grid nodes must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError("grid nodes must be finite")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SpaceGrid:
    """Strictly increasing spatial nodes (log-moneyness y, spot S, or strike K)."""

    nodes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", _as_nodes(self.nodes))
        if self.nodes.size < 3:
            raise GridError(f"space grid needs at least 3 nodes, got {self.nodes.size}")
        if np.any(np.diff(self.nodes) <= 0):
            raise GridError("space grid nodes must be strictly increasing")

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int) -> "SpaceGrid":
        return cls(np.linspace(lo, hi, n))

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> np.ndarray:
        """Per-cell widths h_i = x_{i+1} - x_i (length n-1)."""
        return np.diff(self.nodes)

    @property
    def span(self) -> Interval:
        return Interval(self.nodes[0], self.nodes[-1])

    def window_indices(self, window: Interval, rtol: float = 1e-9) -> np.ndarray:
        """Indices of nodes inside [window.lo, window.hi] (edge-tolerant)."""
        tol = rtol * max(1.0, abs(window.lo), abs(window.hi))
        if window.lo < self.nodes[0] - tol or window.hi > self.nodes[-1] + tol:
            raise GridError(
                f"window ({window.lo}, {window.hi}) extends beyond grid span "
                f"({self.nodes[0]}, {self.nodes[-1]})"
            )
        mask = (self.nodes >= window.lo - tol) & (self.nodes <= window.hi + tol)
        return np.nonzero(mask)[0]

    def index_of(self, x: float, rtol: float = 1e-9) -> int:
        """Index of the node equal to x; GridError if x is not a node."""
        i = int(np.argmin(np.abs(self.nodes - x)))
        if abs(self.nodes[i] - x) > rtol * max(1.0, abs(x)):
            raise GridError(f"coordinate {x} is not a grid node (nearest {self.nodes[i]})")
        return i


def same_grid(a: SpaceGrid, b: SpaceGrid, rtol: float = 0.0) -> bool:
    if a is b:
        return True
    if a.n != b.n:
        return False
    if rtol == 0.0:
        return bool(np.array_equal(a.nodes, b.nodes))
    return bool(np.allclose(a.nodes, b.nodes, rtol=rtol, atol=0.0))


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time nodes starting at 0 (years)."""

    nodes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", _as_nodes(self.nodes))
        if self.nodes.size < 2:
            raise GridError("time grid needs at least 2 nodes")
        if abs(self.nodes[0]) > 1e-15:
            raise GridError(f"time grid must start at 0, got {self.nodes[0]}")
        if np.any(np.diff(self.nodes) <= 0):
            raise GridError("time grid nodes must be strictly increasing")

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def total(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def index_of(self, t: float, rtol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[i] - t) > rtol * max(1.0, abs(t)):
            raise GridError(f"time {t} is not a grid node (nearest {self.nodes[i]})")
        return i


def time_nodes_through(total: float, n_steps: int, mark: float | None = None) -> TimeGrid:
    """Near-uniform time grid on [0, total] with `mark` placed exactly on a node.

    Keeps the requested number of steps; the two uniform pieces on either
    side of the mark have nearly equal spacing.
    """
    if total <= 0:
        raise GridError(f"total time must be positive, got {total}")
    if n_steps < 1:
        raise GridError(f"need at least one step, got {n_steps}")
    base = np.linspace(0.0, total, n_steps + 1)
    if mark is None:
        return TimeGrid(base)
    if not (0.0 < mark < total):
        raise GridError(f"mark {mark} must lie strictly inside (0, {total})")
    k = int(round(mark / total * n_steps))
    k = min(max(k, 1), n_steps - 1)
    left = np.linspace(0.0, mark, k + 1)
    right = np.linspace(mark, total, n_steps - k + 1)
    return TimeGrid(np.concatenate([left, right[1:]]))


@dataclass(frozen=True, eq=False)
class Field1D:
    """Real values sampled on a SpaceGrid, one per node."""

    grid: SpaceGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != (self.grid.n,):
            raise GridError(
                f"field values shape {arr.shape} does not match grid with {self.grid.n} nodes"
            )
        if not np.all(np.isfinite(arr)):
            raise GridError("field values must all be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_function(cls, grid: SpaceGrid, fn) -> "Field1D":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))

    @classmethod
    def constant(cls, grid: SpaceGrid, value: float) -> "Field1D":
        return cls(grid, np.full(grid.n, float(value)))

    def interp(self, x) -> np.ndarray:
        """Piecewise-linear evaluation at arbitrary coordinates."""
        return np.interp(x, self.grid.nodes, self.values)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Values on a space grid for every level of a time grid, shape (nt, nx)."""

    space: SpaceGrid
    time: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != (self.time.n, self.space.n):
            raise GridError(
                f"space-time values shape {arr.shape} does not match "
                f"(nt={self.time.n}, nx={self.space.n})"
            )
        if not np.all(np.isfinite(arr)):
            raise GridError("space-time field values must all be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_function(cls, space: SpaceGrid, time: TimeGrid, fn) -> "SpaceTimeField":
        """Sample fn(y, tau) on the tensor grid (fn must broadcast)."""
        yy = space.nodes[None, :]
        tt = time.nodes[:, None]
        vals = np.broadcast_to(fn(yy, tt), (time.n, space.n))
        return cls(space, time, np.array(vals, dtype=float))

    def level(self, i: int) -> Field1D:
        return Field1D(self.space, self.values[i])

    def level_at(self, t: float, rtol: float = 1e-9) -> Field1D:
        return self.level(self.time.index_of(t, rtol=rtol))
