"""Time grids, piecewise-linear sampled paths, Brownian drivers and path
functionals (oscillation, total variation, q-variation controls)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from . import rng


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("grid needs at least one step")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def delta(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.delta

    def ratio_to(self, coarse_steps: int) -> int:
        """Number of fine steps per coarse step; raises if the grids are not nested."""
        if coarse_steps < 1 or self.steps % coarse_steps:
            raise ValueError(f"grid with {coarse_steps} steps is not nested in one with {self.steps}")
        return self.steps // coarse_steps


class SampledPath:
    """Path known at the nodes of a :class:`TimeGrid`, linear in between."""

    def __init__(self, grid: TimeGrid, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != grid.steps + 1:
            raise ValueError(f"expected {grid.steps + 1} values, got {values.shape[0]}")
        self.grid = grid
        self.values = values
        self.values.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        if not 0.0 <= t <= self.grid.horizon:
            raise ValueError(f"time {t} outside [0, {self.grid.horizon}]")
        pos = t / self.grid.delta
        k = min(int(math.floor(pos)), self.grid.steps - 1)
        frac = pos - k
        if frac == 0.0:
            return self.values[k].copy()
        return self.values[k] + frac * (self.values[k + 1] - self.values[k])

    def restrict(self, coarse_steps: int) -> SampledPath:
        r = self.grid.ratio_to(coarse_steps)
        return SampledPath(TimeGrid(self.grid.horizon, coarse_steps), self.values[::r])

    def to_csv(self, fh, header_comment: str | None = None) -> None:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(self.dim)])
        for t, row in zip(self.grid.nodes, self.values):
            writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, fh) -> SampledPath:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        data = np.array(rows[1:], dtype=np.float64)
        t = data[:, 0]
        grid = TimeGrid(float(t[-1]), len(t) - 1)
        return cls(grid, data[:, 1:])


def linear_refine(values: np.ndarray, factor: int) -> np.ndarray:
    """Insert ``factor - 1`` equally spaced points on every segment; works on a trailing (..., K+1, n) layout."""
    if factor == 1:
        return values
    a = values[..., :-1, :]
    step = values[..., 1:, :] - a
    frac = np.arange(factor) / factor
    pieces = a[..., :, None, :] + frac[:, None] * step[..., :, None, :]
    shape = pieces.shape[:-3] + (pieces.shape[-3] * factor, pieces.shape[-1])
    return np.concatenate([pieces.reshape(shape), values[..., -1:, :]], axis=-2)


# ---------------------------------------------------------------- Brownian drivers

def brownian_batch(dim: int, grid: TimeGrid, seed: int, paths) -> np.ndarray:
    """Brownian values of shape (P, N+1, dim), one row block per path index."""
    z = rng.normals_batch(seed, paths, 0, grid.steps * dim).reshape(-1, grid.steps, dim)
    inc = math.sqrt(grid.delta) * z
    out = np.zeros((inc.shape[0], grid.steps + 1, dim))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def refine_batch(values: np.ndarray, grid: TimeGrid, seed: int, paths) -> np.ndarray:
    """Brownian-bridge midpoint insertion for a (P, N+1, dim) batch.

    The stream index is the step count of the grid being refined, so every
    refinement round draws fresh numbers.
    """
    P, K1, dim = values.shape
    n = K1 - 1
    z = rng.normals_batch(seed, paths, n, n * dim).reshape(P, n, dim)
    mid = 0.5 * (values[:, :-1] + values[:, 1:]) + math.sqrt(grid.delta / 4.0) * z
    out = np.empty((P, 2 * n + 1, dim))
    out[:, 0::2] = values
    out[:, 1::2] = mid
    return out


def sample_brownian(dim: int, grid: TimeGrid, seed: int, path: int = 0) -> SampledPath:
    """Brownian motion started at 0 on ``grid``; reproducible from ``(seed, path)``."""
    if dim < 1:
        raise ValueError("dimension must be positive")
    return SampledPath(grid, brownian_batch(dim, grid, seed, [path])[0])


def refine_brownian(B: SampledPath, seed: int, path: int = 0) -> SampledPath:
    """Halve the mesh by inserting Brownian-bridge midpoints; original nodes are kept bit-for-bit."""
    fine = refine_batch(B.values[None], B.grid, seed, [path])[0]
    return SampledPath(TimeGrid(B.grid.horizon, 2 * B.grid.steps), fine)


def wong_zakai_interpolant(B: SampledPath, N: int) -> SampledPath:
    """Piecewise-linear interpolant of ``B`` through its values on the N-step grid, resampled on B's grid."""
    r = B.grid.ratio_to(N)
    coarse = B.values[::r]
    return SampledPath(B.grid, linear_refine(coarse, r))


# ---------------------------------------------------------------- functionals

def _window(w: SampledPath, s: float, t: float) -> np.ndarray:
    if s > t:
        raise ValueError("reversed window")
    if s < 0 or t > w.grid.horizon:
        raise ValueError("window outside the path's time range")
    nodes = w.grid.nodes
    inner = (nodes > s) & (nodes < t)
    return np.concatenate([w(s)[None], w.values[inner], w(t)[None]])


def diameter(points: np.ndarray) -> float:
    """Largest pairwise distance of a point cloud."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 2:
        return 0.0
    if points.shape[1] == 1:
        return float(points.max() - points.min())
    if len(points) > 64:
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            pass
    if len(points) <= 2048:
        return float(pdist(points).max())
    best = 0.0
    for i in range(0, len(points), 512):
        block = points[i:i + 512]
        d2 = np.sum((block[:, None, :] - points[None, :, :]) ** 2, axis=-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def sup_oscillation(w: SampledPath, s: float, t: float) -> float:
    """max over s <= u <= v <= t of |w(u) - w(v)|."""
    return diameter(_window(w, s, t))


def total_variation(w: SampledPath, s: float, t: float) -> float:
    pts = _window(w, s, t)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def q_variation(points: np.ndarray, q: float) -> float:
    """sup over partitions of sum |increment|^q for the polygon through ``points``."""
    if q == 1.0:
        return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())
    n = len(points)
    best = np.zeros(n)
    for j in range(1, n):
        d = np.linalg.norm(points[:j] - points[j], axis=1) ** q
        best[j] = np.max(best[:j] + d)
    return float(best[-1])


@dataclass(frozen=True)
class ControlFunction:
    """omega(s, t) = q-variation of the path over [s, t] raised to the q-th power."""

    path: SampledPath
    q: float = 1.0

    def __call__(self, s: float, t: float) -> float:
        if s == t:
            return 0.0
        return q_variation(_window(self.path, s, t), self.q)


def control_of_path(w: SampledPath, q: float = 1.0) -> ControlFunction:
    if q < 1:
        raise ValueError("q must be at least 1")
    return ControlFunction(w, float(q))
