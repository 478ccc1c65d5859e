"""Homogeneous Poisson processes on the flat torus with a periodic grid index."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from morselab.errors import RadiusTooLarge
from morselab.geometry import R_MAX, TOL, torus_distances

log = logging.getLogger(__name__)


def trial_rng(seed: int, trial: int = 0, attempt: int = 0) -> np.random.Generator:
    """Independent counter-based stream for one (seed, trial, attempt)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial, attempt])))


def _cells_per_axis(r_max: float) -> int:
    return max(1, int(np.floor(1.0 / (2.0 * r_max))))


@dataclass(frozen=True)
class TorusPointCloud:
    """A point set in [0,1)^d plus a grid of cells with side >= 2·r_max."""

    points: np.ndarray
    intensity: float
    seed: int
    cells_per_axis: int
    grid: dict[int, np.ndarray] = field(repr=False)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def cell_side(self) -> float:
        return 1.0 / self.cells_per_axis

    def __len__(self) -> int:
        return len(self.points)

    def cell_of(self, x) -> tuple[int, ...]:
        m = self.cells_per_axis
        return tuple(np.minimum((np.asarray(x, dtype=float) * m).astype(np.int64), m - 1))


def _build_grid(points: np.ndarray, m: int) -> dict[int, np.ndarray]:
    if len(points) == 0:
        return {}
    d = points.shape[1]
    cells = np.minimum((points * m).astype(np.int64), m - 1)
    flat = np.ravel_multi_index(tuple(cells.T), (m,) * d)
    order = np.argsort(flat, kind="stable")
    keys, starts = np.unique(flat[order], return_index=True)
    ends = np.append(starts[1:], len(order))
    return {int(k): np.sort(order[s:e]) for k, s, e in zip(keys, starts, ends)}


def from_points(points, intensity: float | None = None, seed: int = 0,
                r_max: float = R_MAX) -> TorusPointCloud:
    """Wrap an explicit point array (rows in [0,1)^d) as a cloud."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if pts.size else pts.reshape(0, 1)
    if pts.size and (pts.min() < 0.0 or pts.max() >= 1.0):
        raise ValueError("torus coordinates must lie in [0, 1)")
    m = _cells_per_axis(r_max)
    return TorusPointCloud(
        points=pts,
        intensity=float(intensity if intensity is not None else len(pts)),
        seed=seed,
        cells_per_axis=m,
        grid=_build_grid(pts, m),
    )


def sample(n: float, d: int, seed: int, trial: int = 0, attempt: int = 0,
           r_max: float = R_MAX) -> TorusPointCloud:
    """Draw P_n: N ~ Poisson(n) i.i.d. uniform points on [0,1)^d.

    Identical (n, d, seed, trial, attempt) always yields an identical cloud.
    """
    if n <= 0:
        raise ValueError(f"intensity must be positive, got {n}")
    if not 1 <= d <= 4:
        raise ValueError(f"dimension must be in [1, 4], got {d}")
    rng = trial_rng(seed, trial, attempt)
    count = int(rng.poisson(n))
    points = rng.random((count, d))
    log.debug("Sampled %d points (n=%g, d=%d, seed=%d, trial=%d)", count, n, d, seed, trial)
    return from_points(points, intensity=n, seed=seed, r_max=r_max)


def points_in_ball(cloud: TorusPointCloud, center, r: float) -> list[int]:
    """Ids of points within torus distance <= r of *center*, ascending."""
    if r > cloud.cell_side * (1 + TOL):
        raise RadiusTooLarge(f"radius {r:.6g} exceeds grid reach {cloud.cell_side:.6g}")
    if len(cloud) == 0:
        return []
    m = cloud.cells_per_axis
    home = np.array(cloud.cell_of(center))
    keys = set()
    for offset in itertools.product((-1, 0, 1), repeat=cloud.d):
        cell = np.mod(home + np.array(offset), m)
        keys.add(int(np.ravel_multi_index(tuple(cell), (m,) * cloud.d)))
    buckets = [cloud.grid[key] for key in keys if key in cloud.grid]
    if not buckets:
        return []
    ids = np.sort(np.concatenate(buckets))
    dist = torus_distances(center, cloud.points[ids])
    return [int(i) for i in ids[dist <= r]]


# ------------------------------------------------------------------
# CSV exchange
# ------------------------------------------------------------------

def write_cloud_csv(cloud: TorusPointCloud, path: str | Path) -> Path:
    path = Path(path)
    header = ",".join(f"x{i}" for i in range(cloud.d))
    np.savetxt(path, cloud.points.reshape(-1, cloud.d), delimiter=",", header=header,
               comments="", fmt="%.17g")
    return path


def read_cloud_csv(path: str | Path, intensity: float | None = None, seed: int = 0,
                   r_max: float = R_MAX) -> TorusPointCloud:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
    d = len(header.split(",")) if header else 0
    if d == 0:
        raise ValueError(f"{path}: missing header row")
    body = [line for line in path.read_text(encoding="utf-8").splitlines()[1:] if line.strip()]
    if body:
        points = np.loadtxt(body, delimiter=",", ndmin=2)
    else:
        points = np.zeros((0, d))
    return from_points(points, intensity=intensity, seed=seed, r_max=r_max)
