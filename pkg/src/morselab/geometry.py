"""Geometry on the flat torus and in local Euclidean lifts.

All kernels here are pure functions of their inputs.  Points on the torus are
arrays with coordinates in [0, 1); lifted points are plain Euclidean vectors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, special

from morselab.errors import (
    AmbiguousBoundary,
    DegenerateConfiguration,
    FacetTie,
    LiftOutOfRange,
    ParameterOutOfRange,
)

log = logging.getLogger(__name__)

R_MAX = 0.125
TOL = 1e-12
# Lifts are isometric only inside the open half-unit ball around the anchor.
LIFT_REACH = 0.5

_QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-13, limit=200)


# ------------------------------------------------------------------
# Torus metric and lifts
# ------------------------------------------------------------------

def wrap(delta: np.ndarray) -> np.ndarray:
    """Map coordinate differences into (-1/2, 1/2]."""
    delta = np.asarray(delta, dtype=float)
    return delta - np.ceil(delta - 0.5)


def torus_distance(a, b) -> float:
    return float(np.linalg.norm(wrap(np.asarray(b, dtype=float) - np.asarray(a, dtype=float))))


def torus_distances(a, pts) -> np.ndarray:
    """Distances from *a* to every row of *pts*."""
    pts = np.asarray(pts, dtype=float)
    if pts.size == 0:
        return np.zeros(0)
    return np.linalg.norm(wrap(pts - np.asarray(a, dtype=float)), axis=-1)


def wrap_point(x) -> np.ndarray:
    """Bring a Euclidean vector back into [0, 1)^d."""
    out = np.mod(np.asarray(x, dtype=float), 1.0)
    out[out >= 1.0] = 0.0
    return out


@dataclass(frozen=True)
class EuclideanLift:
    center: np.ndarray
    points: np.ndarray


def local_lift(anchor, pts, reach: float = LIFT_REACH) -> EuclideanLift:
    """Lift *pts* isometrically into R^d around *anchor*.

    Each output row is the input shifted by the integer offset that places
    every coordinate difference in (-1/2, 1/2].  Raises LiftOutOfRange if a
    point lies at distance >= *reach* from the anchor.
    """
    anchor = np.asarray(anchor, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lifted = wrap(pts - anchor)
    if lifted.size:
        norms = np.linalg.norm(lifted, axis=1)
        worst = float(norms.max())
        if worst >= reach:
            raise LiftOutOfRange(
                f"point at distance {worst:.6g} from anchor exceeds lift reach {reach:.6g}"
            )
    return EuclideanLift(center=anchor, points=lifted)


def lift_simplex(coords: np.ndarray) -> np.ndarray:
    """Lift the rows of *coords* anchored at the first row, which maps to the origin."""
    return local_lift(coords[0], coords).points


# ------------------------------------------------------------------
# Circumspheres and enclosing balls
# ------------------------------------------------------------------

@dataclass(frozen=True)
class Circumsphere:
    center: np.ndarray
    radius: float
    barycentric: np.ndarray


def circumsphere(pts) -> Circumsphere:
    """Circumsphere of k+1 affinely independent points, within their affine hull.

    Solves the k×k equidistance system G λ = diag(G)/2 in the frame
    u_i = x_i - x_0, so that c = x_0 + Σ λ_i u_i.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    base = pts[0]
    if len(pts) == 1:
        return Circumsphere(center=base.copy(), radius=0.0, barycentric=np.ones(1))
    frame = pts[1:] - base
    gram = frame @ frame.T
    scale = float(np.max(np.diag(gram)))
    k = len(frame)
    if k > pts.shape[1]:
        raise DegenerateConfiguration(f"{k + 1} points cannot be affinely independent in R^{pts.shape[1]}")
    if scale <= 0.0 or np.linalg.det(gram) <= TOL * scale**k:
        raise DegenerateConfiguration("points are affinely dependent within tolerance")
    lam = np.linalg.solve(gram, 0.5 * np.diag(gram))
    center = base + lam @ frame
    bary = np.concatenate(([1.0 - lam.sum()], lam))
    return Circumsphere(center=center, radius=float(np.linalg.norm(center - base)), barycentric=bary)


@dataclass(frozen=True)
class CircumsphereBatch:
    offset: np.ndarray
    radius: np.ndarray
    barycentric: np.ndarray


def circumspheres(frames) -> CircumsphereBatch:
    """Vectorized :func:`circumsphere` over frames of shape (t, k, d).

    Row i of each frame is x_i - x_0; ``offset`` is the center minus x_0.
    Any affinely dependent frame raises DegenerateConfiguration with the
    same tolerance as the scalar kernel.
    """
    frames = np.asarray(frames, dtype=float)
    t, k, dim = frames.shape
    if k < 1:
        raise ValueError("frames need at least one row")
    if k > dim:
        raise DegenerateConfiguration(f"{k + 1} points cannot be affinely independent in R^{dim}")
    if t == 0:
        return CircumsphereBatch(np.zeros((0, dim)), np.zeros(0), np.zeros((0, k + 1)))
    gram = frames @ frames.transpose(0, 2, 1)
    diag = np.diagonal(gram, axis1=1, axis2=2)
    scale = diag.max(axis=1)
    if np.any(scale <= 0.0) or np.any(np.linalg.det(gram) <= TOL * scale**k):
        raise DegenerateConfiguration("points are affinely dependent within tolerance")
    lam = np.linalg.solve(gram, 0.5 * diag[..., None])[..., 0]
    offset = np.einsum("tk,tkd->td", lam, frames)
    bary = np.concatenate([1.0 - lam.sum(axis=1, keepdims=True), lam], axis=1)
    return CircumsphereBatch(offset=offset, radius=np.linalg.norm(offset, axis=1), barycentric=bary)


@dataclass(frozen=True)
class MinBall:
    center: np.ndarray
    radius: float
    support: tuple[int, ...]


def _ball_through(pts: np.ndarray, support: list[int]) -> MinBall | None:
    if not support:
        return None
    cs = circumsphere(pts[support])
    return MinBall(center=cs.center, radius=cs.radius, support=tuple(sorted(support)))


def _inside(ball: MinBall | None, p: np.ndarray) -> bool:
    if ball is None:
        return False
    return float(np.linalg.norm(p - ball.center)) <= ball.radius * (1 + TOL) + 1e-15


def _welzl(pts: np.ndarray, todo: list[int], support: list[int]) -> MinBall | None:
    if not todo or len(support) == pts.shape[1] + 1:
        return _ball_through(pts, support)
    p, rest = todo[-1], todo[:-1]
    ball = _welzl(pts, rest, support)
    if _inside(ball, pts[p]):
        return ball
    return _welzl(pts, rest, support + [p])


def min_enclosing_ball(pts) -> MinBall:
    """Smallest ball containing the (at most d+2) lifted points.

    Deterministic recursive Welzl search; ``support`` lists the row indices
    whose circumsphere is the ball.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    ball = _welzl(pts, list(range(len(pts))), [])
    assert ball is not None
    return ball


def contains_center(cs: Circumsphere) -> bool:
    """True iff the circumcenter lies in the open simplex."""
    bary = cs.barycentric
    if np.any(np.abs(bary) <= TOL):
        raise AmbiguousBoundary("circumcenter within tolerance of a facet")
    return bool(np.all(bary > TOL))


def simplex_volume(pts) -> float:
    """k-dimensional volume of the simplex spanned by k+1 points (1 for a vertex)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    k = len(pts) - 1
    if k == 0:
        return 1.0
    frame = pts[1:] - pts[0]
    det = max(float(np.linalg.det(frame @ frame.T)), 0.0)
    return math.sqrt(det) / math.factorial(k)


def phi_and_nearest_face(pts, cs: Circumsphere) -> tuple[float, int]:
    """Relative distance from the circumcenter to the nearest facet plane.

    Returns ``(phi, i)`` where the nearest facet is the one opposite vertex
    ``i``.  For an edge both facets are single vertices at distance rho, so
    ``(1.0, 0)`` is returned.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    k = len(pts) - 1
    if k < 1:
        raise ValueError("phi is defined for simplices of dimension >= 1")
    if k == 1:
        return 1.0, 0
    dists = np.empty(k + 1)
    for i in range(k + 1):
        facet = np.delete(pts, i, axis=0)
        # The projection of c onto the facet plane is the facet's circumcenter.
        dists[i] = np.linalg.norm(cs.center - circumsphere(facet).center)
    order = np.argsort(dists, kind="stable")
    best, second = dists[order[0]], dists[order[1]]
    phi = float(best / cs.radius)
    if second - best <= TOL * max(second, cs.radius):
        raise FacetTie(f"two facets at equal distance from the center (phi={phi:.6g})", phi=phi)
    return phi, int(order[0])


# ------------------------------------------------------------------
# Spherical volumes
# ------------------------------------------------------------------

def unit_ball_volume(d: int) -> float:
    """ω_d, the volume of the unit ball in R^d (ω_0 = 1)."""
    return float(math.pi ** (d / 2) / special.gamma(d / 2 + 1))


def sphere_measure(k: int) -> float:
    """Surface measure of S^{k-1}; S^0 carries the counting measure."""
    return k * unit_ball_volume(k)


@dataclass(frozen=True)
class SphericalVolumes:
    """Cap, lens and difference volumes of unit-scale balls in R^d."""

    d: int

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ParameterOutOfRange(f"dimension must be >= 1, got {self.d}")

    @cached_property
    def omega(self) -> float:
        return unit_ball_volume(self.d)

    @cached_property
    def omega_lower(self) -> float:
        return unit_ball_volume(self.d - 1)

    def unit_ball_volume(self) -> float:
        return self.omega

    def _profile(self, rho: float) -> float:
        return (1.0 - rho * rho) ** ((self.d - 1) / 2)

    def cap_volume(self, delta: float) -> float:
        """Volume of {x in B_1 : x_1 >= delta}; negative delta gives the larger part."""
        if not -1.0 <= delta <= 1.0:
            raise ParameterOutOfRange(f"cap height must lie in [-1, 1], got {delta}")
        if delta < 0:
            return self.omega - self.cap_volume(-delta)
        if delta <= 0.5:
            head, _ = integrate.quad(self._profile, 0.0, delta, **_QUAD_OPTS)
            return max(self.omega / 2 - self.omega_lower * head, 0.0)
        tail, _ = integrate.quad(self._profile, delta, 1.0, **_QUAD_OPTS)
        return max(self.omega_lower * tail, 0.0)

    @property
    def taylor_coefficients(self) -> tuple[float, float, float]:
        """(C0, C1, C3) of cap_volume(Δ) = C0 - C1 Δ + C3 Δ³ + o(Δ⁴)."""
        return self.omega / 2, self.omega_lower, (self.d - 1) * self.omega_lower / 6

    def cap_taylor(self, delta: float) -> float:
        c0, c1, c3 = self.taylor_coefficients
        return c0 - c1 * delta + c3 * delta**3

    def lens_volume(self, r1: float, r2: float, delta: float) -> float:
        """Volume of B_{r1}(x) ∩ B_{r2}(y) with |x - y| = delta."""
        if min(r1, r2) < 0 or delta < 0:
            raise ParameterOutOfRange("radii and distance must be nonnegative")
        if min(r1, r2) == 0 or delta >= r1 + r2:
            return 0.0
        if delta <= abs(r1 - r2):
            return self.omega * min(r1, r2) ** self.d
        h1 = (delta * delta + r1 * r1 - r2 * r2) / (2 * delta)
        h2 = delta - h1
        return (
            r1**self.d * self.cap_volume(float(np.clip(h1 / r1, -1.0, 1.0)))
            + r2**self.d * self.cap_volume(float(np.clip(h2 / r2, -1.0, 1.0)))
        )

    def diff_volume(self, eps: float, alpha: float) -> float:
        """vol(B_{1-αε}(x2) \\ B_1(x1)) with |x1 - x2| = ε, as a difference of caps."""
        if not (0 < eps < 1 and 0 < alpha < 1):
            raise ParameterOutOfRange(f"need eps, alpha in (0, 1), got eps={eps}, alpha={alpha}")
        if eps > 2 * alpha / (1 + alpha * alpha):
            raise ParameterOutOfRange(
                f"eps={eps} exceeds 2α/(1+α²)={2 * alpha / (1 + alpha * alpha):.6g}"
            )
        small = 1.0 - alpha * eps
        delta = alpha - 0.5 * eps * (1 + alpha * alpha)
        inner = small**self.d * self.cap_volume(delta / small)
        outer = self.cap_volume(min(delta + eps, 1.0))
        return max(inner - outer, 0.0)
