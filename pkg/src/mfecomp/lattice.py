"""Stochastic-dominance lattice of finite distributions on an ordered grid.

A distribution ``f`` dominates ``g`` (``f`` is larger) when its CDF lies
pointwise below the CDF of ``g``.  Suprema and infima are taken through
pointwise min/max of CDFs.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

__all__ = [
    "TAU_SD",
    "GridMismatchError",
    "Grid",
    "StateGrid",
    "ActionGrid",
    "PopulationState",
    "ActionDistribution",
    "Ordering",
    "cdf",
    "from_cdf",
    "sd_compare",
    "sd_leq",
    "sd_sup",
    "sd_inf",
    "tv_distance",
    "expectation",
    "mean",
]

TAU_SD = 1e-10
_NORMALIZATION_SLACK = 1e-9


class GridMismatchError(ValueError):
    """Raised when two objects that must share a grid do not."""


class Grid:
    """Strictly increasing finite set of real points."""

    min_size = 1

    def __init__(self, points: Sequence[float]):
        pts = np.asarray(points, dtype=float).ravel()
        if pts.size < self.min_size:
            raise ValueError(
                f"{type(self).__name__} needs at least {self.min_size} points, got {pts.size}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if pts.size > 1 and not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        pts.setflags(write=False)
        self.points = pts

    @classmethod
    def integers(cls, lo: int, hi: int):
        return cls(np.arange(lo, hi + 1, dtype=float))

    @classmethod
    def linspace(cls, lo: float, hi: float, n: int):
        return cls(np.linspace(lo, hi, n))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(
            np.array_equal(self.points, other.points)
        )

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def __repr__(self) -> str:
        if len(self) <= 6:
            body = ", ".join(f"{p:g}" for p in self.points)
        else:
            body = f"{self.points[0]:g}, ..., {self.points[-1]:g}; n={len(self)}"
        return f"{type(self).__name__}([{body}])"

    @property
    def lower(self) -> float:
        return float(self.points[0])

    @property
    def upper(self) -> float:
        return float(self.points[-1])

    def is_equally_spaced(self, rtol: float = 1e-9) -> bool:
        if len(self) < 2:
            return True
        d = np.diff(self.points)
        return bool(np.allclose(d, d[0], rtol=rtol, atol=0.0))

    @property
    def step(self) -> float:
        if len(self) < 2:
            raise ValueError("a single-point grid has no step")
        if not self.is_equally_spaced():
            raise ValueError("grid is not equally spaced")
        return float(self.points[1] - self.points[0])


class StateGrid(Grid):
    min_size = 2


class ActionGrid(Grid):
    min_size = 1


class PopulationState:
    """Probability mass function on a grid.

    Weights whose sum is within 1e-9 of one are renormalized; anything
    further off is rejected.
    """

    __slots__ = ("weights", "grid")

    def __init__(self, weights: Sequence[float], grid: Grid):
        w = np.array(weights, dtype=float).ravel()
        if w.size != len(grid):
            raise GridMismatchError(f"{w.size} weights for a grid of {len(grid)} points")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            if w.min() < -_NORMALIZATION_SLACK:
                raise ValueError(f"negative weight {w.min():.3g}")
            w = np.clip(w, 0.0, None)
        total = w.sum()
        if abs(total - 1.0) > _NORMALIZATION_SLACK:
            raise ValueError(f"weights sum to {total!r}, not 1")
        w /= total
        w.setflags(write=False)
        self.weights = w
        self.grid = grid

    @classmethod
    def point_mass(cls, grid: Grid, index: int):
        w = np.zeros(len(grid))
        w[index] = 1.0
        return cls(w, grid)

    @classmethod
    def lowest(cls, grid: Grid):
        return cls.point_mass(grid, 0)

    @classmethod
    def highest(cls, grid: Grid):
        return cls.point_mass(grid, len(grid) - 1)

    @classmethod
    def uniform(cls, grid: Grid):
        return cls(np.full(len(grid), 1.0 / len(grid)), grid)

    @classmethod
    def from_counts(cls, counts: Sequence[float], grid: Grid):
        c = np.asarray(counts, dtype=float)
        return cls(c / c.sum(), grid)

    def __len__(self) -> int:
        return self.weights.size

    def __repr__(self) -> str:
        return f"{type(self).__name__}(mean={self.mean():.4g}, n={len(self)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, PopulationState):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.weights, other.weights))

    __hash__ = None

    def cdf(self) -> np.ndarray:
        return cdf(self)

    def mean(self) -> float:
        return mean(self)


class ActionDistribution(PopulationState):
    """Population action distribution: a PopulationState over an action grid."""

    __slots__ = ()


class Ordering(enum.Enum):
    EQUAL = "equal"
    F_DOMINATES = "f_dominates"
    G_DOMINATES = "g_dominates"
    INCOMPARABLE = "incomparable"


def _check_same_grid(f: PopulationState, g: PopulationState) -> None:
    if f.grid != g.grid:
        raise GridMismatchError("distributions live on different grids")


def cdf(f: PopulationState) -> np.ndarray:
    """Cumulative sums of ``f``; the last entry is pinned to exactly one."""
    c = np.cumsum(f.weights)
    c[-1] = 1.0
    return c


def from_cdf(values: np.ndarray, grid: Grid, cls=PopulationState) -> PopulationState:
    """Rebuild a distribution from CDF values, clamping differencing noise."""
    c = np.asarray(values, dtype=float)
    w = np.diff(c, prepend=0.0)
    w = np.clip(w, 0.0, None)
    return cls(w / w.sum(), grid)


def sd_compare(f: PopulationState, g: PopulationState, tau: float = TAU_SD) -> Ordering:
    """Classify the pair under first-order stochastic dominance."""
    _check_same_grid(f, g)
    d = cdf(f) - cdf(g)
    f_below = bool(np.all(d <= tau))
    g_below = bool(np.all(d >= -tau))
    if f_below and g_below:
        return Ordering.EQUAL
    if f_below:
        return Ordering.F_DOMINATES
    if g_below:
        return Ordering.G_DOMINATES
    return Ordering.INCOMPARABLE


def sd_leq(f: PopulationState, g: PopulationState, tau: float = TAU_SD) -> bool:
    """True when ``g`` weakly dominates ``f`` (``f`` is SD-below ``g``)."""
    _check_same_grid(f, g)
    return bool(np.all(cdf(g) - cdf(f) <= tau))


def sd_sup(f: PopulationState, g: PopulationState) -> PopulationState:
    _check_same_grid(f, g)
    return from_cdf(np.minimum(cdf(f), cdf(g)), f.grid, type(f))


def sd_inf(f: PopulationState, g: PopulationState) -> PopulationState:
    _check_same_grid(f, g)
    return from_cdf(np.maximum(cdf(f), cdf(g)), f.grid, type(f))


def tv_distance(f: PopulationState, g: PopulationState) -> float:
    _check_same_grid(f, g)
    return 0.5 * float(np.abs(f.weights - g.weights).sum())


def expectation(f: PopulationState, phi: Sequence[float]) -> float:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != f.weights.shape:
        raise ValueError(f"phi has shape {phi.shape}, expected {f.weights.shape}")
    return float(phi @ f.weights)


def mean(f: PopulationState) -> float:
    return float(f.grid.points @ f.weights)
