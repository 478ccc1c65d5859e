"""Critical faces of the Čech filtration and the statistics built on them.

A k-simplex X is critical when its circumcenter lies in the open simplex and
the open circumball holds no sample point.  Every vertex is critical.  Signs
come from the persistence reduction: positive faces create a k-cycle, negative
faces terminate a (k-1)-cycle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from math import comb

import numpy as np

from morselab.cech import Filtration
from morselab.errors import NotCovered
from morselab.geometry import (
    circumsphere,
    contains_center,
    lift_simplex,
    local_lift,
    phi_and_nearest_face,
    wrap,
    wrap_point,
)
from morselab.persistence import Persistence, Sign
from morselab.sampler import TorusPointCloud, points_in_ball

log = logging.getLogger(__name__)

EMPTY_BALL_TOL = 1e-12
PROJECTION_TOL = 1e-10


@dataclass(frozen=True)
class CriticalFace:
    index: int
    vertices: tuple[int, ...]
    center: np.ndarray = field(repr=False)
    rho: float
    phi: float
    nearest_facet: tuple[int, ...] | None
    nearest_facet_rho: float | None = None
    sign: Sign | None = None

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1


def torus_betti(d: int, k: int) -> int:
    """Rank of H_k(T^d; F)."""
    return comb(d, k) if 0 <= k <= d else 0


def sphere_betti(d: int, k: int) -> int:
    """Rank of H_k(S^d; F)."""
    return 1 if k in (0, d) else 0


# ------------------------------------------------------------------
# Detection and signs
# ------------------------------------------------------------------

def detect_critical_faces(filtration: Filtration, cloud: TorusPointCloud) -> list[CriticalFace]:
    """Critical faces of dimension <= d, in filtration order, sign unset.

    Only simplices whose enclosing ball passes through every vertex can hold
    their circumcenter; the others are skipped without a circumsphere.
    """
    d = cloud.d
    points = cloud.points
    faces: list[CriticalFace] = []
    dims = filtration.dims
    candidates = np.flatnonzero((dims == 0) | (filtration.full_support & (dims <= d)))
    for idx in candidates:
        idx = int(idx)
        vertices = filtration.simplex_vertices(idx)
        if dims[idx] == 0:
            faces.append(CriticalFace(idx, vertices, points[vertices[0]].copy(), 0.0, 0.0, None))
            continue
        coords = points[list(vertices)]
        lifted = lift_simplex(coords)
        cs = circumsphere(lifted)
        if not contains_center(cs):
            continue
        center = wrap_point(coords[0] + cs.center)
        rho = cs.radius
        inside = [
            i for i in points_in_ball(cloud, center, rho)
            if i not in vertices
        ]
        if inside:
            dist = np.linalg.norm(wrap(points[inside] - center), axis=1)
            if np.any(dist < rho * (1 - EMPTY_BALL_TOL)):
                continue
        phi, opposite = phi_and_nearest_face(lifted, cs)
        nearest = vertices[:opposite] + vertices[opposite + 1:]
        facet_rho = circumsphere(np.delete(lifted, opposite, axis=0)).radius
        faces.append(CriticalFace(idx, vertices, center, rho, phi, nearest, facet_rho))
    log.debug("Detected %d critical faces among %d simplices", len(faces), len(filtration))
    return faces


def assign_signs(criticals: list[CriticalFace], persistence: Persistence) -> list[CriticalFace]:
    return [replace(c, sign=persistence.signs[c.index]) for c in criticals]


def _by_dim(criticals: list[CriticalFace], d: int) -> list[list[CriticalFace]]:
    out: list[list[CriticalFace]] = [[] for _ in range(d + 1)]
    for c in criticals:
        if c.dim <= d:
            out[c.dim].append(c)
    return out


# ------------------------------------------------------------------
# Counters
# ------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalCounts:
    """F, F° and F• as arrays of shape (d+1, len(r_grid))."""

    r_grid: np.ndarray
    total: np.ndarray
    positive: np.ndarray
    negative: np.ndarray


def _count_above(rhos: np.ndarray, r_grid: np.ndarray, r_max: float) -> np.ndarray:
    rhos = np.sort(rhos[rhos <= r_max])
    return len(rhos) - np.searchsorted(rhos, r_grid, side="right")


def classify_and_count(criticals: list[CriticalFace], r_grid, r_max: float, d: int) -> CriticalCounts:
    """Count critical k-faces with rho in (r, r_max], split by sign."""
    r_grid = np.atleast_1d(np.asarray(r_grid, dtype=float))
    total = np.zeros((d + 1, len(r_grid)), dtype=np.int64)
    positive = np.zeros_like(total)
    negative = np.zeros_like(total)
    for k, faces in enumerate(_by_dim(criticals, d)):
        rho = np.array([c.rho for c in faces], dtype=float)
        pos = np.array([c.sign is Sign.POSITIVE for c in faces], dtype=bool)
        if any(c.sign is None for c in faces):
            raise ValueError("signs must be assigned before counting")
        total[k] = _count_above(rho, r_grid, r_max)
        positive[k] = _count_above(rho[pos], r_grid, r_max)
        negative[k] = _count_above(rho[~pos], r_grid, r_max)
    return CriticalCounts(r_grid=r_grid, total=total, positive=positive, negative=negative)


def _lookup(criticals: list[CriticalFace]) -> dict[tuple[int, ...], CriticalFace]:
    return {c.vertices: c for c in criticals}


def paired_negative_rhos(criticals: list[CriticalFace], k: int) -> np.ndarray:
    """Radii of negative critical (k+1)-faces whose nearest facet is a positive critical k-face."""
    table = _lookup(criticals)
    out = []
    for c in criticals:
        if c.dim != k + 1 or c.sign is not Sign.NEGATIVE or c.nearest_facet is None:
            continue
        facet = table.get(c.nearest_facet)
        if facet is not None and facet.sign is Sign.POSITIVE:
            out.append(c.rho)
    return np.array(out, dtype=float)


def pairing_fraction(criticals: list[CriticalFace], k: int, r: float, r_max: float) -> tuple[int, float]:
    """(F^of_{k+1,r}, its share among negative critical (k+1)-faces in (r, r_max]).

    The share is 1 when the window holds no negative (k+1)-face.
    """
    negatives = [
        c for c in criticals
        if c.dim == k + 1 and c.sign is Sign.NEGATIVE and r < c.rho <= r_max
    ]
    paired = paired_negative_rhos(criticals, k)
    count = int(np.sum((paired > r) & (paired <= r_max)))
    if not negatives:
        return count, 1.0
    return count, count / len(negatives)


def pairing_counts(criticals: list[CriticalFace], r_grid, r_max: float, d: int) -> np.ndarray:
    """F^of_{k,r} for k = 0..d over *r_grid* (row 0 is always zero)."""
    r_grid = np.atleast_1d(np.asarray(r_grid, dtype=float))
    out = np.zeros((d + 1, len(r_grid)), dtype=np.int64)
    for k in range(1, d + 1):
        out[k] = _count_above(paired_negative_rhos(criticals, k - 1), r_grid, r_max)
    return out


def sign_bookkeeping(criticals: list[CriticalFace], d: int) -> list[int]:
    """#positive critical k-faces minus #negative critical (k+1)-faces, k = 0..d."""
    pos = [0] * (d + 2)
    neg = [0] * (d + 2)
    for c in criticals:
        if c.sign is Sign.POSITIVE:
            pos[c.dim] += 1
        elif c.sign is Sign.NEGATIVE:
            neg[c.dim] += 1
    return [pos[k] - neg[k + 1] for k in range(d + 1)]


# ------------------------------------------------------------------
# Isolation of the nearest facet
# ------------------------------------------------------------------

def _project_ball(y: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    v = y - center
    norm = float(np.linalg.norm(v))
    if norm <= radius:
        return y
    return center + v * (radius / norm)


def project_onto_ball_intersection(p, centers, radius: float, tol: float = PROJECTION_TOL,
                                   max_iter: int = 100_000) -> np.ndarray:
    """Nearest point to *p* in the intersection of equal balls.

    Cyclic projections with Dykstra's correction terms, so the iterates
    converge to the projection and not merely to some point of the set.
    """
    x = np.asarray(p, dtype=float).copy()
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    increments = np.zeros_like(centers)
    for _ in range(max_iter):
        previous = x.copy()
        for i, c in enumerate(centers):
            y = x + increments[i]
            x = _project_ball(y, c, radius)
            increments[i] = y - x
        if np.linalg.norm(x - previous) < tol:
            break
    return x


def isolation_check(face: CriticalFace, coface: CriticalFace, cloud: TorusPointCloud) -> bool:
    """True iff no sample point outside the coface lies in I(coface).

    I(X) is the open rho(X)-neighborhood of the intersection of the
    rho(X)-balls around the vertices of the nearest facet *face*.
    """
    rho = coface.rho
    anchor = cloud.points[face.vertices[0]]
    facet = local_lift(anchor, cloud.points[list(face.vertices)]).points
    facet_center = circumsphere(facet).center
    for i in points_in_ball(cloud, anchor, 2 * rho):
        if i in coface.vertices:
            continue
        p = local_lift(anchor, cloud.points[i]).points[0]
        if np.linalg.norm(p - facet_center) < rho:
            return False
        if np.max(np.linalg.norm(facet - p, axis=1)) >= 2 * rho:
            continue
        q = project_onto_ball_intersection(p, facet, rho)
        if np.linalg.norm(p - q) < rho:
            return False
    return True


# ------------------------------------------------------------------
# Homological connectivity and hitting times
# ------------------------------------------------------------------

def stabilization_radius(persistence: Persistence, d: int, k: int) -> float:
    """T_k: the smallest r with H_k(C_s) ≅ H_k(T^d) for all s in [r, cap].

    Returns inf when the complex at its cap does not carry the homology of the torus in degree k.
    """
    essentials = [p for p in persistence.pairs if p.degree == k and p.essential]
    if len(essentials) != torus_betti(d, k):
        return float("inf")
    t = 0.0
    for p in persistence.pairs:
        if p.degree != k:
            continue
        birth = persistence.birth_value(p)
        if p.essential:
            t = max(t, birth)
        else:
            death = persistence.death_value(p)
            if death > birth:
                t = max(t, death)
    return t


def homological_connectivity_holds(persistence: Persistence, d: int, k: int, r: float) -> bool:
    return stabilization_radius(persistence, d, k) <= r


def instantaneous_homology_matches(persistence: Persistence, d: int, k: int, r: float) -> bool:
    return int(persistence.betti_at(r, max_degree=d)[k]) == torus_betti(d, k)


def is_covered(persistence: Persistence, d: int) -> bool:
    return int(persistence.essential_counts(max_degree=d)[d]) == 1


def coverage_radius(criticals: list[CriticalFace], d: int) -> float | None:
    rhos = [c.rho for c in criticals if c.dim == d]
    return max(rhos) if rhos else None


@dataclass(frozen=True)
class HittingTimes:
    stabilization: list[float]
    isolation: list[float | None]
    never_covered: list[int]
    coverage_radius: float

    def matches(self, k: int) -> bool:
        return self.isolation[k] is not None and self.isolation[k] == self.stabilization[k]


def _first_coface_values(filtration: Filtration, targets: set[int], dim: int) -> dict[int, float]:
    """Smallest value of a (dim+1)-coface for each target simplex position."""
    cofaces = np.flatnonzero(filtration.dims == dim + 1)
    lowest = np.full(len(filtration), np.inf)
    np.minimum.at(lowest, filtration.facets[cofaces, : dim + 2].ravel(),
                  np.repeat(filtration.values[cofaces], dim + 2))
    return {i: float(lowest[i]) for i in targets if np.isfinite(lowest[i])}


def hitting_times(persistence: Persistence, criticals: list[CriticalFace], d: int) -> HittingTimes:
    """T_k for k = 0..d and T_k^iso for k = 1..d.

    T_k^iso is the last time a positive critical k-face stops being isolated,
    i.e. the largest first-coface value among them.  Faces without a coface
    below the cap make T_k^iso undefined (None) and are counted.
    """
    if not is_covered(persistence, d):
        raise NotCovered("the torus is not covered below the filtration cap")
    filtration = persistence.filtration
    stabilization = [stabilization_radius(persistence, d, k) for k in range(d + 1)]
    isolation: list[float | None] = [None]
    never: list[int] = [0]
    for k in range(1, d + 1):
        targets = {c.index for c in criticals if c.dim == k and c.sign is Sign.POSITIVE}
        first = _first_coface_values(filtration, targets, k)
        missing = len(targets) - len(first)
        never.append(missing)
        if missing:
            isolation.append(None)
        else:
            isolation.append(max(first.values(), default=0.0))
    radius = coverage_radius(criticals, d)
    assert radius is not None
    return HittingTimes(stabilization=stabilization, isolation=isolation,
                        never_covered=never, coverage_radius=radius)


def euler_alternating_sum(criticals: list[CriticalFace], persistence: Persistence, d: int) -> int:
    """Σ_k (-1)^k #critical k-faces; equals χ(T^d) = 0 on covered trials."""
    if not is_covered(persistence, d):
        raise NotCovered("Euler sum of critical faces needs a covered torus")
    return sum((-1) ** c.dim for c in criticals if c.dim <= d)
