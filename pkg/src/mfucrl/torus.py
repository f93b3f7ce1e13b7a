"""Grid-discretized probability distributions on the unit torus [0, 1).

A distribution is stored as density heights on the uniform grid
``m_i = (i - 1) / M`` (0-based: ``m[i] = i / M``); each bin is centered at its
grid point with width ``1/M``, so bin ``i`` carries mass ``heights[i] / M``
and a normalized distribution satisfies ``heights.mean() == 1``.

All index arithmetic is modulo ``M``.  Distributions are immutable after
construction; every operation is a pure function of its inputs plus explicit
seeds.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import GridError

# Densities are clamped below at this floor before taking logarithms, so that
# empty bins cannot produce -inf rewards.
DENSITY_FLOOR = 1e-8

MASS_TOL = 1e-9


def wrap(s):
    """Map positions to the fundamental domain [0, 1)."""
    return np.mod(s, 1.0)


def wrap_signed(d):
    """Map displacements to (-0.5, 0.5], the shortest signed arc."""
    d = np.mod(np.asarray(d, dtype=float) + 0.5, 1.0) - 0.5
    # mod returns values in [-0.5, 0.5); move the closed end to +0.5
    return np.where(d == -0.5, 0.5, d) if np.ndim(d) else (0.5 if d == -0.5 else float(d))


def circular_distance(a, b):
    """Geodesic distance on the unit circle."""
    return np.abs(wrap_signed(np.asarray(a, dtype=float) - b))


class GridDistribution:
    """Histogram density on the unit torus.

    Parameters
    ----------
    heights : array-like of shape (M,)
        Non-negative density values at the grid points.  They are normalized
        at construction so that ``heights.mean() == 1`` (total mass 1).
    """

    __slots__ = ("M", "heights")

    def __init__(self, heights):
        h = np.asarray(heights, dtype=float)
        if h.ndim != 1 or h.size < 2:
            raise GridError(f"grid must have at least 2 bins, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise GridError("density heights must be finite")
        if np.any(h < 0):
            raise GridError("density heights must be non-negative")
        total = h.mean()
        if total <= 0:
            raise GridError("density must have positive total mass")
        h = h / total
        h.flags.writeable = False
        object.__setattr__(self, "M", h.size)
        object.__setattr__(self, "heights", h)

    def __setattr__(self, name, value):
        raise AttributeError("GridDistribution is immutable")

    @property
    def grid(self) -> np.ndarray:
        """Grid points m_i = i / M for i = 0..M-1."""
        return np.arange(self.M) / self.M

    @property
    def masses(self) -> np.ndarray:
        """Per-bin probability masses heights / M."""
        return self.heights / self.M

    def __eq__(self, other):
        return (
            isinstance(other, GridDistribution)
            and self.M == other.M
            and np.array_equal(self.heights, other.heights)
        )

    def __hash__(self):
        return hash((self.M, self.heights.tobytes()))

    def __repr__(self):
        return f"GridDistribution(M={self.M})"

    def rotated(self, bins: int) -> "GridDistribution":
        """Distribution rotated by an integer number of bins."""
        return GridDistribution(np.roll(self.heights, bins))

    def to_json(self) -> list:
        """JSON-serializable list of the M heights."""
        return self.heights.tolist()

    @classmethod
    def from_json(cls, heights: Sequence[float]) -> "GridDistribution":
        return cls(np.asarray(heights, dtype=float))


def _from_normalized(heights: np.ndarray) -> GridDistribution:
    """Wrap an already-normalized height vector without copying or checks.

    Internal fast path for hot loops; callers must guarantee the invariants.
    """
    h = np.asarray(heights, dtype=float)
    h.flags.writeable = False
    obj = object.__new__(GridDistribution)
    object.__setattr__(obj, "M", h.size)
    object.__setattr__(obj, "heights", h)
    return obj


def uniform(M: int) -> GridDistribution:
    """Uniform distribution on an M-point grid (density 1 everywhere)."""
    if M < 2:
        raise GridError(f"grid must have at least 2 bins, got M={M}")
    return GridDistribution(np.ones(int(M)))


def from_density(M: int, density: Callable[[np.ndarray], np.ndarray]) -> GridDistribution:
    """Distribution obtained by sampling a density function at the grid points.

    The sampled values are normalized so the histogram has total mass 1.
    Raises :class:`GridError` if the density is negative at any grid point.
    """
    if M < 2:
        raise GridError(f"grid must have at least 2 bins, got M={M}")
    grid = np.arange(int(M)) / float(M)
    h = np.asarray(density(grid), dtype=float)
    if h.shape != grid.shape:
        h = np.array([density(s) for s in grid], dtype=float)
    if np.any(h < 0) or not np.all(np.isfinite(h)):
        raise GridError("density must be finite and non-negative on all grid points")
    return GridDistribution(h)


def density_at(dist: GridDistribution, s) -> np.ndarray:
    """Density at position(s) ``s`` via periodic linear interpolation.

    Interpolates between the two neighboring grid heights, so the density is
    continuous on the torus (required for stable log-density rewards).
    """
    x = wrap(np.asarray(s, dtype=float)) * dist.M
    i0 = np.floor(x).astype(int) % dist.M
    frac = x - np.floor(x)
    h = dist.heights
    out = h[i0] * (1.0 - frac) + h[(i0 + 1) % dist.M] * frac
    return out if out.ndim else float(out)


def log_density_at(dist: GridDistribution, s) -> np.ndarray:
    """log of the interpolated density, clamped below at DENSITY_FLOOR."""
    return np.log(np.maximum(density_at(dist, s), DENSITY_FLOOR))


def sample(dist: GridDistribution, n: int, seed) -> np.ndarray:
    """n i.i.d. positions drawn by inverse CDF over the piecewise-constant density.

    ``seed`` may be an integer or a ``numpy`` Generator.  Bin ``i`` spans
    ``[m_i - 1/(2M), m_i + 1/(2M))`` (mod 1) with constant density inside.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random(int(n))
    cdf = np.cumsum(dist.masses)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, dist.M - 1)
    lower = np.concatenate(([0.0], cdf[:-1]))
    mass = dist.masses
    frac = (u - lower[idx]) / np.where(mass[idx] > 0, mass[idx], 1.0)
    left_edge = idx / dist.M - 0.5 / dist.M
    return wrap(left_edge + frac / dist.M)


def empirical(points, M: int) -> GridDistribution:
    """Histogram of sample positions on the M-point grid (bins centered at m_i)."""
    x = wrap(np.asarray(points, dtype=float) + 0.5 / M)
    counts = np.bincount(np.floor(x * M).astype(int) % M, minlength=M)
    return GridDistribution(counts * (M / counts.sum()))


def wasserstein1_circle(a: GridDistribution, b: GridDistribution) -> float:
    """Wasserstein-1 distance between two grid distributions on the circle.

    Computed as ``min_alpha (1/M) * sum_i |F_a(i) - F_b(i) - alpha|`` where
    ``F`` are the bin CDFs; the optimal shift ``alpha`` is the median of the
    CDF differences.  This equals optimal transport with the geodesic ground
    metric on the circle.
    """
    if a.M != b.M:
        raise GridError(f"grid sizes differ: {a.M} != {b.M}")
    diff = np.cumsum(a.masses - b.masses)
    alpha = np.median(diff)
    return float(np.sum(np.abs(diff - alpha)) / a.M)
