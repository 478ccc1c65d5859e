"""One Monte Carlo trial: sample, filter, reduce, detect, count."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from morselab.cech import build_filtration
from morselab.errors import DegenerateConfiguration
from morselab.geometry import R_MAX
from morselab.limits import radius_for_lambda, threshold_degree
from morselab.morse import (
    assign_signs,
    classify_and_count,
    detect_critical_faces,
    euler_alternating_sum,
    hitting_times,
    is_covered,
    pairing_counts,
    pairing_fraction,
    sign_bookkeeping,
    stabilization_radius,
)
from morselab.persistence import Sign, reduce_persistence
from morselab.sampler import sample

log = logging.getLogger(__name__)

RECORD_LAMBDA = -3.0


@dataclass(frozen=True)
class TrialParams:
    """Everything a worker needs to run trials; shared read-only."""

    n: float
    d: int
    k: int
    r: float
    r_cap: float
    r_grid: tuple[float, ...]
    lambda_grid: tuple[float, ...]
    # lambda_radii[k-1][j]: radius of λ = lambda_grid[j] at the threshold of H_k
    lambda_radii: tuple[tuple[float, ...], ...]
    record_floor: float
    max_attempts: int = 20

    @classmethod
    def build(cls, n: float, d: int, k: int, lam: float | None = None, r: float | None = None,
              r_max: float = R_MAX, lambda_cap: float = 6.0, r_grid_points: int = 200,
              lambda_grid=(-1.0, 0.0, 1.0, 2.0), max_attempts: int = 20) -> TrialParams:
        if r is None:
            if lam is None:
                raise ValueError("either lam or r is required")
            r = radius_for_lambda(n, d, threshold_degree(k, d), lam, r_max=r_max)
        cap = radius_for_lambda(n, d, d, lambda_cap, r_max=None)
        r_cap = min(r_max, max(cap, r))
        lo = min(radius_for_lambda(n, d, threshold_degree(k, d), RECORD_LAMBDA, r_max=None), r_cap)
        grid = tuple(float(x) for x in np.linspace(lo, r_cap, r_grid_points))
        radii = []
        for deg in range(1, d + 1):
            row = []
            for lam_j in lambda_grid:
                radius = radius_for_lambda(n, d, threshold_degree(deg, d), lam_j, r_max=None)
                if radius > r_cap:
                    log.warning("grid radius %.6g (k=%d, λ=%g) clipped to r_cap=%.6g",
                                radius, deg, lam_j, r_cap)
                    radius = r_cap
                row.append(radius)
            radii.append(tuple(row))
        floor = min(radius_for_lambda(n, d, 1, RECORD_LAMBDA, r_max=None), lo)
        return cls(n=n, d=d, k=k, r=r, r_cap=r_cap, r_grid=grid,
                   lambda_grid=tuple(float(x) for x in lambda_grid),
                   lambda_radii=tuple(radii), record_floor=floor, max_attempts=max_attempts)


@dataclass(frozen=True)
class Rejection:
    trial: int
    attempt: int
    seed: list[int]
    reason: str


def _finite(x: float | None) -> float | None:
    if x is None or not math.isfinite(x):
        return None
    return float(x)


@dataclass
class TrialSummary:
    """Per-trial record.  Infinite or undefined times are stored as None."""

    trial: int
    seed: list[int]
    attempt: int
    points: int
    covered: bool
    coverage_radius: float | None
    # Counters at the configured radius, indexed by degree 0..d
    f_at_r: list[int]
    f_pos_at_r: list[int]
    f_neg_at_r: list[int]
    f_of_at_r: list[int]
    # pairing_fraction[k] for negative (k+1)-faces, k = 0..d-1
    pairing_fraction: list[float]
    # Step functions on the shared r grid, shape (d+1, G)
    f_curve: list[list[int]]
    f_pos_curve: list[list[int]]
    f_neg_curve: list[list[int]]
    f_of_curve: list[list[int]]
    betti_curve: list[list[int]]
    stabilization: list[float | None]
    isolation: list[float | None]
    isolation_matches: list[bool]
    never_isolated_free: list[int]
    # betti_on_grid[k-1][j] = β_k at lambda_radii[k-1][j]
    betti_on_grid: list[list[int]]
    critical_radii: list[list[float]]
    critical_positive: list[list[bool]]
    euler: int | None
    bookkeeping: list[int] | None
    counters_consistent: bool = True

    @property
    def connectivity_time(self) -> float | None:
        return self.stabilization[0]

    def holds(self, k: int, r: float) -> bool:
        """H_{k,r}: the stabilization time is finite and at most r."""
        t = self.stabilization[k]
        return t is not None and t <= r

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrialSummary:
        return cls(**data)


def _summarize(params: TrialParams, trial: int, attempt: int, seed: list[int]) -> TrialSummary:
    d, r_cap = params.d, params.r_cap
    cloud = sample(params.n, d, seed[0], trial=trial, attempt=attempt, r_max=r_cap)
    filtration = build_filtration(cloud, r_max=r_cap)
    persistence = reduce_persistence(filtration)
    criticals = assign_signs(detect_critical_faces(filtration, cloud), persistence)

    grid = np.asarray(params.r_grid)
    curves = classify_and_count(criticals, grid, r_cap, d)
    at_r = classify_and_count(criticals, [params.r], r_cap, d)
    of_curve = pairing_counts(criticals, grid, r_cap, d)
    of_at_r = pairing_counts(criticals, [params.r], r_cap, d)
    fractions = [pairing_fraction(criticals, k, params.r, r_cap)[1] for k in range(d)]
    betti = persistence.betti_curves(grid, max_degree=d)

    covered = is_covered(persistence, d)
    if covered:
        times = hitting_times(persistence, criticals, d)
        isolation = [_finite(x) for x in times.isolation]
        matches = [times.matches(k) for k in range(d + 1)]
        never = list(times.never_covered)
        coverage = float(times.coverage_radius)
        euler = euler_alternating_sum(criticals, persistence, d)
        bookkeeping = sign_bookkeeping(criticals, d)
    else:
        isolation = [None] * (d + 1)
        matches = [False] * (d + 1)
        never = [0] * (d + 1)
        coverage = None
        euler = None
        bookkeeping = None
    stabilization = [_finite(stabilization_radius(persistence, d, k)) for k in range(d + 1)]

    on_grid = [
        [int(persistence.betti_at(radius, max_degree=d)[k]) for radius in row]
        for k, row in enumerate(params.lambda_radii, start=1)
    ]
    radii: list[list[float]] = [[] for _ in range(d + 1)]
    positive: list[list[bool]] = [[] for _ in range(d + 1)]
    for c in criticals:
        if 1 <= c.dim <= d and c.rho > params.record_floor:
            radii[c.dim].append(float(c.rho))
            positive[c.dim].append(c.sign is Sign.POSITIVE)

    consistent = bool(np.array_equal(curves.total, curves.positive + curves.negative))
    return TrialSummary(
        trial=trial,
        seed=list(seed),
        attempt=attempt,
        points=len(cloud),
        covered=covered,
        coverage_radius=coverage,
        f_at_r=at_r.total[:, 0].tolist(),
        f_pos_at_r=at_r.positive[:, 0].tolist(),
        f_neg_at_r=at_r.negative[:, 0].tolist(),
        f_of_at_r=of_at_r[:, 0].tolist(),
        pairing_fraction=[float(x) for x in fractions],
        f_curve=curves.total.tolist(),
        f_pos_curve=curves.positive.tolist(),
        f_neg_curve=curves.negative.tolist(),
        f_of_curve=of_curve.tolist(),
        betti_curve=betti.tolist(),
        stabilization=stabilization,
        isolation=isolation,
        isolation_matches=matches,
        never_isolated_free=never,
        betti_on_grid=on_grid,
        critical_radii=radii,
        critical_positive=positive,
        euler=euler,
        bookkeeping=bookkeeping,
        counters_consistent=consistent,
    )


def run_trial(params: TrialParams, master_seed: int, trial: int) -> tuple[TrialSummary, list[Rejection]]:
    """Run one trial, resampling with the next attempt seed on degenerate input."""
    rejections: list[Rejection] = []
    last: DegenerateConfiguration | None = None
    for attempt in range(params.max_attempts):
        seed = [master_seed, trial, attempt]
        try:
            return _summarize(params, trial, attempt, seed), rejections
        except DegenerateConfiguration as exc:
            log.warning("Trial %d attempt %d (seed %s) rejected: %s", trial, attempt, seed, exc)
            rejections.append(Rejection(trial=trial, attempt=attempt, seed=seed, reason=str(exc)))
            last = exc
    raise DegenerateConfiguration(
        f"trial {trial} rejected {params.max_attempts} times in a row; last reason: {last}"
    )


def run_block(params: TrialParams, master_seed: int, trials: list[int]) -> list[tuple[TrialSummary, list[Rejection]]]:
    """Run a static block of trial indices in order; executed inside a worker process."""
    return [run_trial(params, master_seed, t) for t in trials]

