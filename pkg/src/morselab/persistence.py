"""Z_2 persistence of a filtration by column reduction with clearing."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from morselab.cech import Filtration

log = logging.getLogger(__name__)


class Sign(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class PersistencePair:
    birth: int
    death: int | None
    degree: int

    @property
    def essential(self) -> bool:
        return self.death is None


@dataclass(frozen=True)
class Persistence:
    filtration: Filtration
    signs: tuple[Sign, ...]
    partner: np.ndarray  # -1 for essential creators
    pairs: tuple[PersistencePair, ...]

    @property
    def top_dim(self) -> int:
        return int(self.filtration.dims.max()) if len(self.filtration) else 0

    @cached_property
    def positive(self) -> np.ndarray:
        return np.array([s is Sign.POSITIVE for s in self.signs], dtype=bool)

    @cached_property
    def _cumulative(self) -> tuple[np.ndarray, np.ndarray]:
        """Running counts of positive / negative simplices per dimension."""
        dims = self.filtration.dims
        width = self.top_dim + 2
        pos = np.zeros((len(dims) + 1, width), dtype=np.int64)
        neg = np.zeros((len(dims) + 1, width), dtype=np.int64)
        if len(dims):
            onehot = np.eye(width, dtype=np.int64)[dims]
            pos[1:] = np.cumsum(onehot * self.positive[:, None], axis=0)
            neg[1:] = np.cumsum(onehot * ~self.positive[:, None], axis=0)
        return pos, neg

    def betti_prefix(self, length: int, max_degree: int | None = None) -> np.ndarray:
        """Betti numbers of the complex formed by the first *length* simplices."""
        if max_degree is None:
            max_degree = self.filtration.d
        pos, neg = self._cumulative
        out = np.zeros(max_degree + 1, dtype=np.int64)
        for k in range(max_degree + 1):
            created = pos[length, k] if k < pos.shape[1] else 0
            killed = neg[length, k + 1] if k + 1 < neg.shape[1] else 0
            out[k] = created - killed
        return out

    def betti_at(self, r: float, max_degree: int | None = None) -> np.ndarray:
        return self.betti_prefix(self.filtration.prefix_length(r), max_degree)

    def betti_curves(self, r_grid, max_degree: int | None = None) -> np.ndarray:
        """Array of shape (max_degree + 1, len(r_grid))."""
        r_grid = np.asarray(r_grid, dtype=float)
        lengths = np.searchsorted(self.filtration.values, r_grid, side="right")
        return np.stack([self.betti_prefix(int(p), max_degree) for p in lengths], axis=1)

    def essential_counts(self, max_degree: int | None = None) -> np.ndarray:
        if max_degree is None:
            max_degree = self.filtration.d
        out = np.zeros(max_degree + 1, dtype=np.int64)
        for p in self.pairs:
            if p.essential and p.degree <= max_degree:
                out[p.degree] += 1
        return out

    def birth_value(self, pair: PersistencePair) -> float:
        return self.filtration[pair.birth].value

    def death_value(self, pair: PersistencePair) -> float:
        return float("inf") if pair.death is None else self.filtration[pair.death].value

    def diagram(self, degree: int | None = None) -> list[tuple[int, float, float]]:
        """(degree, birth, death) triples; essential classes die at inf."""
        return [
            (p.degree, self.birth_value(p), self.death_value(p))
            for p in self.pairs
            if degree is None or p.degree == degree
        ]


def reduce_persistence(filtration: Filtration) -> Persistence:
    """Standard column reduction in filtration order, top dimension first.

    A simplex is negative iff its reduced column is nonzero.  Columns whose
    index already appeared as a pivot are cleared without reduction.
    """
    m = len(filtration)
    dims = filtration.dims
    low = np.full(m, -1, dtype=np.int64)
    pivot_col: dict[int, int] = {}
    reduced: dict[int, set[int]] = {}
    cleared: set[int] = set()

    top = int(dims.max()) if m else 0
    for dim in range(top, 0, -1):
        for j in np.flatnonzero(dims == dim):
            j = int(j)
            if j in cleared:
                continue
            col = set(filtration.boundary(j))
            while col:
                pivot = max(col)
                other = pivot_col.get(pivot)
                if other is None:
                    break
                col ^= reduced[other]
            if col:
                pivot = max(col)
                pivot_col[pivot] = j
                reduced[j] = col
                low[j] = pivot
                cleared.add(pivot)

    partner = np.full(m, -1, dtype=np.int64)
    signs: list[Sign] = []
    pairs: list[PersistencePair] = []
    for j in range(m):
        if low[j] >= 0:
            signs.append(Sign.NEGATIVE)
            partner[j] = low[j]
            partner[low[j]] = j
            pairs.append(PersistencePair(birth=int(low[j]), death=j, degree=int(dims[j]) - 1))
        else:
            signs.append(Sign.POSITIVE)
    for j in range(m):
        if low[j] < 0 and j not in pivot_col:
            pairs.append(PersistencePair(birth=j, death=None, degree=int(dims[j])))
    pairs.sort(key=lambda p: (p.birth, -1 if p.death is None else p.death))
    log.debug("Reduced %d columns: %d pairs", m, len(pairs))
    return Persistence(filtration=filtration, signs=tuple(signs), partner=partner, pairs=tuple(pairs))
