"""Čech filtration of a torus point cloud, bounded at r_max.

Simplices are generated level by level as cliques of the 2·r_max neighbor
graph and kept in flat arrays.  The minimum enclosing ball of a candidate is
inherited from any facet whose ball already holds the opposite vertex;
otherwise it is the candidate's own circumsphere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
from scipy.spatial import cKDTree

from morselab.errors import DegenerateConfiguration, LiftOutOfRange
from morselab.geometry import LIFT_REACH, R_MAX, TOL, circumspheres, wrap, wrap_point
from morselab.sampler import TorusPointCloud

log = logging.getLogger(__name__)

# Upper bound on candidates handled per vectorized step.
CHUNK = 1 << 18


@dataclass(frozen=True, order=True)
class FiltrationSimplex:
    vertices: tuple[int, ...]
    value: float

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1

    def facets(self) -> list[tuple[int, ...]]:
        if self.dim == 0:
            return []
        v = self.vertices
        return [v[:i] + v[i + 1:] for i in range(len(v))]


@dataclass(frozen=True, eq=False)
class Filtration:
    """Simplices sorted by (value, dim, vertices); facets always precede cofaces.

    Row i of ``vertices`` and ``facets`` is padded with -1 past ``dims[i] + 1``
    entries; ``facets`` holds facet positions in ascending order.  ``centers``
    and ``radii`` describe each simplex's minimum enclosing ball, and
    ``full_support`` marks the simplices whose ball passes through every vertex.
    """

    vertices: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    dims: np.ndarray = field(repr=False)
    facets: np.ndarray = field(repr=False)
    centers: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)
    full_support: np.ndarray = field(repr=False)
    r_max: float
    d: int

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[FiltrationSimplex]:
        return (self[i] for i in range(len(self)))

    def __getitem__(self, i: int) -> FiltrationSimplex:
        return FiltrationSimplex(vertices=self.simplex_vertices(i), value=float(self.values[i]))

    def simplex_vertices(self, i: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.vertices[i, : self.dims[i] + 1])

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {self.simplex_vertices(i): i for i in range(len(self))}

    def prefix_length(self, r: float) -> int:
        return int(np.searchsorted(self.values, r, side="right"))

    def complex_at(self, r: float) -> Sequence[FiltrationSimplex]:
        """The simplices with value <= r, as a prefix of the filtration order."""
        return [self[i] for i in range(self.prefix_length(r))]

    def boundary(self, i: int) -> list[int]:
        """Positions of the facets of simplex *i*, ascending."""
        k = int(self.dims[i])
        return [int(j) for j in self.facets[i, : k + 1]] if k else []

    def value_of(self, vertices: Sequence[int]) -> float:
        return float(self.values[self.index[tuple(vertices)]])


def one_skeleton(filtration: Filtration, r: float) -> set[tuple[int, int]]:
    p = filtration.prefix_length(r)
    edges = filtration.vertices[:p][filtration.dims[:p] == 1, :2]
    return {(int(a), int(b)) for a, b in edges}


# ------------------------------------------------------------------
# Construction
# ------------------------------------------------------------------

@dataclass
class _Level:
    """Simplices of one dimension in lexicographic order.

    ``keys[i]`` is (position of the row minus its last vertex in the previous
    level) * n + last vertex, so keys increase strictly along the level.
    """

    rows: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    radii: np.ndarray
    centers: np.ndarray
    full: np.ndarray
    facets: np.ndarray

    def __len__(self) -> int:
        return len(self.rows)


def _neighbor_graph(cloud: TorusPointCloud, reach: float) -> tuple[np.ndarray, np.ndarray]:
    """CSR (indptr, indices) of the upper neighbors within *reach*, ascending per row."""
    n = len(cloud)
    if n < 2:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    tree = cKDTree(cloud.points, boxsize=1.0)
    pairs = np.sort(tree.query_pairs(reach, output_type="ndarray"), axis=1).astype(np.int64)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(pairs[:, 0], minlength=n), out=indptr[1:])
    return indptr, pairs[:, 1].copy()


def _positions(levels: list[_Level], rows: np.ndarray, n: int) -> np.ndarray:
    """Position of each row within its level, or -1 when absent."""
    pos = rows[:, 0].astype(np.int64)
    for j in range(1, rows.shape[1]):
        keys = levels[j].keys
        key = pos * n + rows[:, j]
        at = np.minimum(np.searchsorted(keys, key), max(len(keys) - 1, 0))
        hit = (pos >= 0) & (len(keys) > 0)
        hit[hit] = keys[at[hit]] == key[hit]
        pos = np.where(hit, at, -1)
    return pos


def _row_chunks(degree: np.ndarray) -> list[tuple[int, int]]:
    if not len(degree):
        return []
    cum = np.cumsum(degree)
    cuts = np.searchsorted(cum, np.arange(CHUNK, cum[-1], CHUNK), side="right")
    edges = np.unique(np.concatenate(([0], cuts, [len(degree)])))
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _expand_chunk(levels: list[_Level], lo: int, hi: int, indptr: np.ndarray, indices: np.ndarray,
                  points: np.ndarray, r_max: float) -> _Level | None:
    prev = levels[-1]
    n, d = points.shape
    width = prev.rows.shape[1]
    last = prev.rows[lo:hi, -1]
    counts = indptr[last + 1] - indptr[last]
    total = int(counts.sum())
    if total == 0:
        return None
    parent = np.repeat(np.arange(lo, hi, dtype=np.int64), counts)
    first = np.repeat(indptr[last] - (np.cumsum(counts) - counts), counts)
    cand = np.column_stack([prev.rows[parent], indices[first + np.arange(total)]])

    # Column j is the facet opposite cand[:, j].
    facets = np.empty((total, width + 1), dtype=np.int64)
    for j in range(width):
        facets[:, j] = _positions(levels, np.delete(cand, j, axis=1), n)
    facets[:, width] = parent
    keep = np.all(facets >= 0, axis=1)
    cand, facets, parent = cand[keep], facets[keep], parent[keep]
    if not len(cand):
        return None

    ball_r = prev.radii[facets]
    ball_c = prev.centers[facets]
    dist = np.linalg.norm(wrap(points[cand] - ball_c), axis=-1)
    inside = dist <= ball_r * (1 + TOL) + 1e-15
    scored = np.where(inside, ball_r, -1.0)
    which = np.argmax(scored, axis=1)
    rows = np.arange(len(cand))
    radius = ball_r[rows, which]
    center = ball_c[rows, which].copy()
    full = ~inside.any(axis=1)
    if full.any():
        own = cand[full]
        if own.shape[1] > d + 1:
            raise DegenerateConfiguration(f"no facet ball encloses a {own.shape[1] - 1}-simplex in R^{d}")
        base = points[own[:, 0]]
        cs = circumspheres(wrap(points[own[:, 1:]] - base[:, None, :]))
        radius[full] = cs.radius
        center[full] = wrap_point(base + cs.offset)
    value = np.maximum(radius, prev.values[facets].max(axis=1))

    ok = value <= r_max
    return _Level(
        rows=cand[ok],
        keys=parent[ok] * n + cand[ok, -1],
        values=value[ok],
        radii=radius[ok],
        centers=center[ok],
        full=full[ok],
        facets=facets[ok],
    )


def _expand(levels: list[_Level], indptr: np.ndarray, indices: np.ndarray,
            points: np.ndarray, r_max: float) -> _Level:
    prev = levels[-1]
    last = prev.rows[:, -1]
    degree = indptr[last + 1] - indptr[last]
    parts = [
        part
        for lo, hi in _row_chunks(degree)
        if (part := _expand_chunk(levels, lo, hi, indptr, indices, points, r_max)) is not None
    ]
    width = prev.rows.shape[1] + 1
    if not parts:
        d = points.shape[1]
        return _Level(
            rows=np.zeros((0, width), dtype=np.int64), keys=np.zeros(0, dtype=np.int64),
            values=np.zeros(0), radii=np.zeros(0), centers=np.zeros((0, d)),
            full=np.zeros(0, dtype=bool), facets=np.zeros((0, width), dtype=np.int64),
        )
    return _Level(*(np.concatenate([getattr(p, name) for p in parts])
                    for name in ("rows", "keys", "values", "radii", "centers", "full", "facets")))


def _assemble(levels: list[_Level], r_max: float, d: int) -> Filtration:
    width = len(levels)
    sizes = [len(level) for level in levels]
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    total = int(offsets[-1])

    vertices = np.full((total, width), -1, dtype=np.int64)
    local = np.full((total, width), -1, dtype=np.int64)
    for k, level in enumerate(levels):
        block = slice(offsets[k], offsets[k + 1])
        vertices[block, : k + 1] = level.rows
        if k:
            local[block, : k + 1] = level.facets + offsets[k - 1]
    dims = np.repeat(np.arange(width, dtype=np.int64), sizes)
    values = np.concatenate([level.values for level in levels])

    order = np.lexsort(tuple(vertices[:, j] for j in reversed(range(width))) + (dims, values))
    rank = np.empty(total, dtype=np.int64)
    rank[order] = np.arange(total)
    facets = np.where(local >= 0, rank[np.maximum(local, 0)], -1)
    # Padding (-1) sorts first; push it back to the end of each row.
    facets = np.sort(np.where(facets >= 0, facets, np.iinfo(np.int64).max), axis=1)
    facets[facets == np.iinfo(np.int64).max] = -1

    return Filtration(
        vertices=vertices[order],
        values=values[order],
        dims=dims[order],
        facets=facets[order],
        centers=np.concatenate([level.centers for level in levels])[order],
        radii=np.concatenate([level.radii for level in levels])[order],
        full_support=np.concatenate([level.full for level in levels])[order],
        r_max=r_max,
        d=d,
    )


def build_filtration(cloud: TorusPointCloud, max_dim: int | None = None,
                     r_max: float = R_MAX) -> Filtration:
    """All simplices of dimension <= max_dim whose enclosing-ball radius is <= r_max."""
    d = cloud.d
    if max_dim is None:
        max_dim = d + 1
    if not 0 <= max_dim <= d + 1:
        raise ValueError(f"max_dim must be in [0, {d + 1}], got {max_dim}")
    if 2 * r_max >= LIFT_REACH:
        raise LiftOutOfRange(f"r_max={r_max} leaves no isometric lift for doubled-radius neighborhoods")
    if r_max > R_MAX:
        log.warning("r_max=%g exceeds %g; ball intersections may not be contractible", r_max, R_MAX)

    points = cloud.points
    n = len(cloud)
    indptr, indices = _neighbor_graph(cloud, 2 * r_max)
    levels = [_Level(
        rows=np.arange(n, dtype=np.int64)[:, None],
        keys=np.arange(n, dtype=np.int64),
        values=np.zeros(n),
        radii=np.zeros(n),
        centers=points.copy(),
        full=np.ones(n, dtype=bool),
        facets=np.zeros((n, 0), dtype=np.int64),
    )]
    for dim in range(1, max_dim + 1):
        level = _expand(levels, indptr, indices, points, r_max)
        log.debug("dimension %d: %d simplices", dim, len(level))
        if not len(level):
            break
        levels.append(level)

    filtration = _assemble(levels, r_max, d)
    log.debug("Filtration complete: %d simplices up to dimension %d", len(filtration), len(levels) - 1)
    return filtration
