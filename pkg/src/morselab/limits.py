"""Analytic objects of the limit theory and Monte Carlo self-tests.

Conventions: ω_j is the unit-ball volume, S^{k-1} carries the surface measure
k·ω_k (counting measure on S^0), Ω_j = ω_1···ω_j and
Γ_{d,k} = C(d,k) Ω_d / (Ω_k Ω_{d-k}).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from morselab.errors import ParameterOutOfRange, RadiusExceedsRmax
from morselab.geometry import R_MAX, sphere_measure, unit_ball_volume

log = logging.getLogger(__name__)

BATCH = 200_000
HULL_TOL = 1e-12


# ------------------------------------------------------------------
# Λ, thresholds and Δ_{k,n}
# ------------------------------------------------------------------

def threshold_degree(k: int, d: int) -> int:
    """Degree whose threshold governs H_k: H_{d-1} shares the threshold of H_d."""
    return d if k == d - 1 else k


def lambda_of(n: float, d: int, r: float) -> float:
    return unit_ball_volume(d) * n * r**d


def threshold_lambda(n: float, k: int, lam: float) -> float:
    """Λ = log n + (k-1) loglog n + λ."""
    if n <= 1:
        raise ParameterOutOfRange(f"n must exceed 1, got {n}")
    return math.log(n) + (k - 1) * math.log(math.log(n)) + lam


def radius_for_lambda(n: float, d: int, k: int, lam: float, r_max: float | None = R_MAX) -> float:
    """The r solving ω_d n r^d = log n + (k-1) loglog n + λ."""
    big = threshold_lambda(n, k, lam)
    r = (max(big, 0.0) / (unit_ball_volume(d) * n)) ** (1.0 / d)
    if r_max is not None and r > r_max:
        raise RadiusExceedsRmax(f"radius {r:.6g} for λ={lam} exceeds r_max={r_max}")
    return r


def delta_kn(n: float, d: int, k: int, r):
    """Δ_{k,n}(r) = n (log n)^{k-1} exp(-ω_d n r^d); accepts scalars or arrays."""
    if n <= 1:
        raise ParameterOutOfRange(f"n must exceed 1, got {n}")
    r = np.asarray(r, dtype=float)
    out = n * math.log(n) ** (k - 1) * np.exp(-unit_ball_volume(d) * n * r**d)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------------
# Integral-geometric constants
# ------------------------------------------------------------------

def _omega_product(j: int) -> float:
    return math.prod(unit_ball_volume(i) for i in range(1, j + 1))


def grassmannian_volume(d: int, k: int) -> float:
    return math.comb(d, k) * _omega_product(d) / (_omega_product(k) * _omega_product(d - k))


def bp_constant(d: int, k: int) -> float:
    """D_bp = (k!)^{d-k+1} Γ_{d,k}."""
    return math.factorial(k) ** (d - k + 1) * grassmannian_volume(d, k)


def dk_prefactor(d: int, k: int) -> float:
    return bp_constant(d, k) / (math.factorial(k + 1) * d * unit_ball_volume(d) ** k)


def dk_closed_form(d: int, k: int) -> float | None:
    """Known closed forms: D_1 = 2^{d-1} and the coverage constant D_d."""
    if k == 1:
        return 2.0 ** (d - 1)
    if k == d:
        ratio = math.sqrt(math.pi) * special.gamma(d / 2 + 1) / special.gamma((d + 1) / 2)
        return float(ratio ** (d - 1) / math.factorial(d))
    return None


@dataclass
class RunningMoments:
    """Streaming mean/variance, mergeable across batches."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return
        other = RunningMoments(int(values.size), float(values.mean()),
                               float(((values - values.mean()) ** 2).sum()))
        self.merge(other)

    def merge(self, other: RunningMoments) -> None:
        if other.count == 0:
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self.m2 += other.m2 + delta * delta * self.count * other.count / total
        self.count = total

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count else float("inf")


def uniform_sphere(rng: np.random.Generator, shape: tuple[int, ...], k: int) -> np.ndarray:
    """Uniform points on S^{k-1} ⊂ R^k via normalized Gaussians; trailing axis is R^k."""
    g = rng.standard_normal(shape + (k,))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _origin_in_open_hull(theta: np.ndarray) -> np.ndarray:
    """theta: (m, k+1, k) -> bool (m,), barycentric coordinates of 0 all > tol."""
    m, kp1, k = theta.shape
    system = np.ones((m, kp1, kp1))
    system[:, :k, :] = np.swapaxes(theta, 1, 2)
    rhs = np.zeros((m, kp1, 1))
    rhs[:, k, 0] = 1.0
    bary = np.linalg.solve(system, rhs)[..., 0]
    return np.all(bary > HULL_TOL, axis=1)


def _simplex_volumes(pts: np.ndarray) -> np.ndarray:
    """pts: (m, j+1, D) -> j-volumes (m,)."""
    frame = pts[:, 1:, :] - pts[:, :1, :]
    j = frame.shape[1]
    gram = frame @ np.swapaxes(frame, 1, 2)
    det = np.clip(np.linalg.det(gram), 0.0, None)
    return np.sqrt(det) / math.factorial(j)


def _circumradii(pts: np.ndarray) -> np.ndarray:
    """pts: (m, j+1, D) -> circumradius of each simplex within its affine hull."""
    frame = pts[:, 1:, :] - pts[:, :1, :]
    gram = frame @ np.swapaxes(frame, 1, 2)
    lam = np.linalg.solve(gram, 0.5 * np.diagonal(gram, axis1=1, axis2=2)[..., None])
    center = np.swapaxes(lam, 1, 2) @ frame
    return np.linalg.norm(center[:, 0, :], axis=1)


def _spawn(seed: int, samples: int) -> list[tuple[np.random.SeedSequence, int]]:
    sizes = [BATCH] * (samples // BATCH)
    if samples % BATCH:
        sizes.append(samples % BATCH)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    return list(zip(children, sizes))


def _run_batches(fn: Callable, seed: int, samples: int, workers: int, *args) -> RunningMoments:
    jobs = _spawn(seed, samples)
    moments = RunningMoments()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, *zip(*[(*args, ss, size) for ss, size in jobs])))
    else:
        results = [fn(*args, ss, size) for ss, size in jobs]
    for part in results:
        moments.merge(part)
    return moments


def _dk_batch(d: int, k: int, seed_seq: np.random.SeedSequence, size: int) -> RunningMoments:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    theta = uniform_sphere(rng, (size, k + 1), k)
    h = _origin_in_open_hull(theta)
    vol = np.abs(np.linalg.det(theta[:, 1:, :] - theta[:, :1, :])) / math.factorial(k)
    out = RunningMoments()
    out.update(np.where(h, vol ** (d - k + 1), 0.0))
    return out


@dataclass(frozen=True)
class DkEstimate:
    d: int
    k: int
    mean: float
    std_error: float
    samples: int
    seed: int

    def as_dict(self) -> dict:
        return dict(d=self.d, k=self.k, samples=self.samples, mean=self.mean,
                    std_error=self.std_error, seed=self.seed)


def estimate_dk(d: int, k: int, samples: int, seed: int, workers: int = 1) -> DkEstimate:
    """Monte Carlo estimate of D_k over (k+1) uniform points on S^{k-1}.

    For k = 1 the four configurations of S^0 are summed exactly.
    """
    if k == 0:
        raise ParameterOutOfRange("D_k is not defined for vertices (k = 0)")
    if not 1 <= k <= d:
        raise ParameterOutOfRange(f"need 1 <= k <= d, got k={k}, d={d}")
    if k == 1:
        integral = sum(
            abs(a - b) ** d for a in (-1, 1) for b in (-1, 1) if a != b
        )
        return DkEstimate(d, k, dk_prefactor(d, 1) * integral, 0.0, 4, seed)
    if samples < 2:
        raise ParameterOutOfRange("need at least 2 samples")
    moments = _run_batches(_dk_batch, seed, samples, workers, d, k)
    scale = dk_prefactor(d, k) * sphere_measure(k) ** (k + 1)
    log.info("D_%d (d=%d): %.6g ± %.2g from %d samples", k, d, scale * moments.mean,
             scale * moments.std_error, moments.count)
    return DkEstimate(d, k, scale * moments.mean, scale * moments.std_error, moments.count, seed)


def exact_mean_F(n: float, d: int, k: int, r: float, r_max: float, dk: float) -> float:
    """E[F_{k,r}] = D_k (k-1)! n (Q(k, Λ) - Q(k, Λ_max)), Q the regularized upper gamma."""
    if k < 1:
        raise ParameterOutOfRange("the mean formula needs k >= 1")
    if not 0 <= r <= r_max:
        raise ParameterOutOfRange(f"need 0 <= r <= r_max, got r={r}, r_max={r_max}")
    big = lambda_of(n, d, r)
    big_max = lambda_of(n, d, r_max)
    return dk * math.factorial(k - 1) * n * float(special.gammaincc(k, big) - special.gammaincc(k, big_max))


def limit_prob_hk(d: int, k: int, lam: float, dk: float) -> float:
    """Limiting P(H_{k,r}); for k = d-1 pass D_d."""
    if not 1 <= k <= d:
        raise ParameterOutOfRange(f"need 1 <= k <= d, got k={k}, d={d}")
    rate = dk * math.exp(-lam)
    if k == d - 1:
        return math.exp(-rate) * (1.0 + rate)
    return math.exp(-rate)


# ------------------------------------------------------------------
# Blaschke–Petkantschin self-tests
# ------------------------------------------------------------------

def _torus_test_function(name: str, radius: float) -> Callable[[np.ndarray], np.ndarray]:
    if name == "ball":
        return lambda rho: (rho <= radius).astype(float)
    if name == "zero":
        return lambda rho: np.zeros_like(rho)
    if name == "smooth":
        return lambda rho: np.where(rho <= radius, (1.0 - rho / radius) ** 2, 0.0)
    raise ParameterOutOfRange(f"unknown test function {name!r}")


def _sphere_test_function(name: str, t0: float) -> Callable[[np.ndarray], np.ndarray]:
    if name == "radius_above":
        return lambda rho: (rho >= t0).astype(float)
    if name == "one":
        return lambda rho: np.ones_like(rho)
    if name == "zero":
        return lambda rho: np.zeros_like(rho)
    raise ParameterOutOfRange(f"unknown test function {name!r}")


@dataclass(frozen=True)
class BPCheck:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def relative_error(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else float("inf")
        return abs(self.lhs - self.rhs) / abs(self.rhs)

    def as_dict(self) -> dict:
        return dict(lhs=self.lhs, lhs_se=self.lhs_se, rhs=self.rhs, rhs_se=self.rhs_se,
                    relative_error=self.relative_error)


def _torus_lhs_batch(d: int, k: int, radius: float, f: str,
                     seed_seq: np.random.SeedSequence, size: int) -> RunningMoments:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    pts = np.zeros((size, k + 1, d))
    pts[:, 1:, :] = rng.uniform(-2 * radius, 2 * radius, size=(size, k, d))
    rho = _circumradii(pts)
    out = RunningMoments()
    out.update(_torus_test_function(f, radius)(rho))
    return out


def _torus_rhs_batch(d: int, k: int, radius: float, f: str,
                     seed_seq: np.random.SeedSequence, size: int) -> RunningMoments:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    rho = rng.uniform(0.0, radius, size=size)
    if k == 1:
        theta = rng.choice([-1.0, 1.0], size=(size, 2, 1))
    else:
        theta = uniform_sphere(rng, (size, k + 1), k)
    vol = _simplex_volumes(theta)
    values = radius * rho ** (d * k - 1) * _torus_test_function(f, radius)(rho) * vol ** (d - k + 1)
    out = RunningMoments()
    out.update(values)
    return out


def verify_bp_torus(d: int, k: int, radius: float, samples: int, seed: int,
                    f: str = "ball", workers: int = 1) -> BPCheck:
    """Two independent estimates of ∫ f over (k+1)-tuples, f a function of rho.

    The left side fixes the first point (translation invariance on the
    unit-volume torus) and samples the others in the box [-2R, 2R]^d, which
    holds every tuple with rho <= R.  The right side samples rho uniformly on
    [0, R] and the spherical configuration uniformly.
    """
    if not 1 <= k <= d:
        raise ParameterOutOfRange(f"need 1 <= k <= d, got k={k}, d={d}")
    if not 0 < radius <= R_MAX:
        raise ParameterOutOfRange(f"test radius must lie in (0, {R_MAX}]")
    lhs = _run_batches(_torus_lhs_batch, seed, samples, workers, d, k, radius, f)
    rhs = _run_batches(_torus_rhs_batch, seed + 1, samples, workers, d, k, radius, f)
    box = (4 * radius) ** (d * k)
    scale = bp_constant(d, k) * (2.0 if k == 1 else sphere_measure(k)) ** (k + 1)
    check = BPCheck(box * lhs.mean, box * lhs.std_error, scale * rhs.mean, scale * rhs.std_error)
    log.info("BP torus d=%d k=%d: lhs=%.6g rhs=%.6g rel.err=%.3g", d, k, check.lhs, check.rhs,
             check.relative_error)
    return check


def _sphere_lhs_batch(k: int, f: str, t0: float, seed_seq: np.random.SeedSequence,
                      size: int) -> RunningMoments:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    theta = uniform_sphere(rng, (size, k), k)
    out = RunningMoments()
    out.update(_sphere_test_function(f, t0)(_circumradii(theta)))
    return out


def _sphere_rhs_batch(k: int, f: str, t0: float, seed_seq: np.random.SeedSequence,
                      size: int) -> RunningMoments:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    t = rng.uniform(0.0, math.pi / 2, size=size)
    rho = np.sin(t)
    if k == 2:
        phi = rng.choice([-1.0, 1.0], size=(size, 2, 1))
    else:
        phi = uniform_sphere(rng, (size, k), k - 1)
    vol = np.abs(np.linalg.det(phi[:, 1:, :] - phi[:, :1, :])) / math.factorial(k - 1)
    values = (math.pi / 2) * rho ** (k * k - 2 * k) * _sphere_test_function(f, t0)(rho) * vol
    out = RunningMoments()
    out.update(values)
    return out


def verify_bp_sphere(k: int, samples: int, seed: int, f: str = "radius_above",
                     t0: float = 0.5, workers: int = 1) -> BPCheck:
    """Sphere change of variables for k points on S^{k-1}, with rho = sin t on the right side."""
    if k < 2:
        raise ParameterOutOfRange("the sphere formula needs k >= 2")
    lhs = _run_batches(_sphere_lhs_batch, seed, samples, workers, k, f, t0)
    rhs = _run_batches(_sphere_rhs_batch, seed + 1, samples, workers, k, f, t0)
    lhs_scale = sphere_measure(k) ** k
    lower = 2.0 if k == 2 else sphere_measure(k - 1)
    rhs_scale = math.factorial(k) * unit_ball_volume(k) * lower**k
    check = BPCheck(lhs_scale * lhs.mean, lhs_scale * lhs.std_error,
                    rhs_scale * rhs.mean, rhs_scale * rhs.std_error)
    log.info("BP sphere k=%d: lhs=%.6g rhs=%.6g rel.err=%.3g", k, check.lhs, check.rhs,
             check.relative_error)
    return check


@dataclass(frozen=True)
class CenterProfile:
    alphas: np.ndarray
    measure: np.ndarray
    slopes: np.ndarray


def sphere_center_profile(k: int, alphas, samples: int, seed: int) -> CenterProfile:
    """Measure of {θ in (S^{k-1})^k : |c(θ)| <= α}, using |c|² = 1 - rho²."""
    if k < 2:
        raise ParameterOutOfRange("the center profile needs k >= 2")
    alphas = np.sort(np.asarray(alphas, dtype=float))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    theta = uniform_sphere(rng, (samples, k), k)
    dist = np.sqrt(np.clip(1.0 - _circumradii(theta) ** 2, 0.0, None))
    dist.sort()
    frac = np.searchsorted(dist, alphas, side="right") / samples
    measure = sphere_measure(k) ** k * frac
    slopes = np.diff(measure) / np.diff(alphas) if len(alphas) > 1 else np.zeros(0)
    return CenterProfile(alphas=alphas, measure=measure, slopes=slopes)
