"""Aggregation across trials and goodness-of-fit against the limit laws."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Sequence

import numpy as np
from scipy import stats

from morselab.errors import InsufficientSamples, ParameterOutOfRange
from morselab.geometry import unit_ball_volume
from morselab.limits import (
    delta_kn,
    exact_mean_F,
    lambda_of,
    limit_prob_hk,
    threshold_degree,
)
from morselab.morse import torus_betti
from morselab.trial import TrialParams, TrialSummary

log = logging.getLogger(__name__)

MIN_SAMPLES = 100
SIGNS = ("all", "positive", "negative")

# Acceptance levels.
PHASE_LAMBDA = 3.0
PHASE_LEVEL = 0.9
PAIRING_LEVEL = 0.9
ISO_LEVEL = 0.95
MAX_CORRELATION = 0.1


def effective_lambda(n: float, d: int, k: int, r: float) -> float:
    """λ with ω_d n r^d = log n + (k-1) loglog n + λ."""
    return lambda_of(n, d, r) - math.log(n) - (k - 1) * math.log(math.log(n))


def binomial_ci(successes: int, trials: int, level: float = 0.99) -> tuple[float, float]:
    """Exact (Clopper–Pearson) interval for a success probability."""
    if trials == 0:
        return 0.0, 1.0
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


# ------------------------------------------------------------------
# Fits
# ------------------------------------------------------------------

@dataclass(frozen=True)
class PoissonFit:
    rate: float
    tv: float
    mean_ratio: float
    variance_ratio: float
    samples: int


def poisson_fit(samples: Sequence[int], rate: float, min_samples: int = MIN_SAMPLES) -> PoissonFit:
    """Total variation to Poisson(rate) plus mean and variance ratios.

    The distance includes the Poisson mass beyond the largest observed value.
    """
    values = np.asarray(samples, dtype=np.int64)
    if len(values) < min_samples:
        raise InsufficientSamples(f"need at least {min_samples} samples, got {len(values)}")
    if rate <= 0:
        raise ParameterOutOfRange(f"Poisson rate must be positive, got {rate}")
    top = int(values.max())
    empirical = np.bincount(values, minlength=top + 1) / len(values)
    support = np.arange(top + 1)
    target = stats.poisson.pmf(support, rate)
    tail = float(stats.poisson.sf(top, rate))
    tv = 0.5 * (float(np.abs(empirical - target).sum()) + tail)
    return PoissonFit(
        rate=rate,
        tv=min(max(tv, 0.0), 1.0),
        mean_ratio=float(values.mean()) / rate,
        variance_ratio=float(values.var(ddof=1)) / rate,
        samples=len(values),
    )


@dataclass(frozen=True)
class ProcessFit:
    sign: str
    edges: list[float]
    mean: list[float]
    std_error: list[float]
    expected: list[float]
    dispersion: list[float | None]
    correlation: list[list[float]]
    max_abs_correlation: float
    trials: int


def process_fit(radii: Sequence[Sequence[float]], n: float, d: int, k: int, rate: float,
                t0: float = 2.0, intervals: int = 4,
                positive: Sequence[Sequence[bool]] | None = None, sign: str = "all") -> ProcessFit:
    """Interval counts of the rescaled critical radii t = Δ_{k,n}(rho) on [0, t0].

    *radii* holds one sequence of critical k-face radii per covered trial.
    With *sign* = "positive" or "negative" only faces of that sign are kept,
    which needs *positive* aligned with *radii*.
    """
    if sign not in SIGNS:
        raise ParameterOutOfRange(f"sign must be one of {SIGNS}, got {sign!r}")
    if sign != "all" and positive is None:
        raise ParameterOutOfRange("sign filtering needs the sign of every radius")
    if len(radii) < 2:
        raise InsufficientSamples("interval statistics need at least two trials")
    edges = np.linspace(0.0, t0, intervals + 1)
    counts = np.zeros((len(radii), intervals), dtype=float)
    for i, rho in enumerate(radii):
        rho = np.asarray(rho, dtype=float)
        if sign != "all":
            mask = np.asarray(positive[i], dtype=bool)
            rho = rho[mask] if sign == "positive" else rho[~mask]
        if rho.size:
            counts[i], _ = np.histogram(delta_kn(n, d, k, rho), bins=edges)
    mean = counts.mean(axis=0)
    var = counts.var(axis=0, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.nan_to_num(np.corrcoef(counts, rowvar=False), nan=0.0)
    corr = np.atleast_2d(corr)
    off = corr[~np.eye(intervals, dtype=bool)] if intervals > 1 else np.zeros(0)
    return ProcessFit(
        sign=sign,
        edges=edges.tolist(),
        mean=mean.tolist(),
        std_error=np.sqrt(var / len(radii)).tolist(),
        expected=(rate * np.diff(edges)).tolist(),
        dispersion=[float(v / m) if m > 0 else None for v, m in zip(var, mean)],
        correlation=corr.tolist(),
        max_abs_correlation=float(np.abs(off).max()) if off.size else 0.0,
        trials=len(radii),
    )


@dataclass(frozen=True)
class HittingFit:
    k: int
    law: str
    rate: float
    mean: float
    std_error: float
    target_mean: float
    ks: float
    iso_frequency: float | None
    samples: int

    @property
    def within_3se(self) -> bool:
        return abs(self.mean - self.target_mean) <= 3 * self.std_error


def transformed_times(times, n: float, d: int, k: int) -> np.ndarray:
    """T' = exp(-n ω_d T^d + log n + (k-1) loglog n) at the threshold degree of k."""
    deg = threshold_degree(k, d)
    t = np.asarray(times, dtype=float)
    return np.exp(-n * unit_ball_volume(d) * t**d + math.log(n) + (deg - 1) * math.log(math.log(n)))


def hitting_time_fit(times: Sequence[float], n: float, d: int, k: int, rate: float,
                     iso_matches: Sequence[bool] | None = None,
                     min_samples: int = MIN_SAMPLES) -> HittingFit:
    """Fit T_k' against Exponential(rate), or Gamma(2, rate) when k = d-1.

    For k = d-1 pass D_d as *rate*.
    """
    if len(times) < min_samples:
        raise InsufficientSamples(f"need at least {min_samples} hitting times, got {len(times)}")
    if rate <= 0:
        raise ParameterOutOfRange(f"rate must be positive, got {rate}")
    values = transformed_times(times, n, d, k)
    if k == d - 1 and d >= 2:
        law, target = "gamma2", stats.gamma(a=2, scale=1.0 / rate)
    else:
        law, target = "exponential", stats.expon(scale=1.0 / rate)
    ks = stats.kstest(values, target.cdf).statistic
    iso = float(np.mean(iso_matches)) if iso_matches is not None and len(iso_matches) else None
    return HittingFit(
        k=k,
        law=law,
        rate=rate,
        mean=float(values.mean()),
        std_error=float(values.std(ddof=1) / math.sqrt(len(values))),
        target_mean=float(target.mean()),
        ks=float(ks),
        iso_frequency=iso,
        samples=len(values),
    )


# ------------------------------------------------------------------
# Aggregation
# ------------------------------------------------------------------

def _moments(rows: np.ndarray) -> dict[str, list[float]]:
    count = rows.shape[0]
    mean = rows.mean(axis=0)
    var = rows.var(axis=0, ddof=1) if count > 1 else np.zeros_like(mean)
    return {
        "mean": mean.tolist(),
        "variance": var.tolist(),
        "std_error": np.sqrt(var / count).tolist(),
    }


@dataclass
class AggregateStats:
    """Everything the report needs; plain JSON-compatible containers only."""

    d: int
    k: int
    n: float
    r: float
    r_cap: float
    trials: int
    covered: int
    rejected: int
    dk: dict[str, float]
    lam_at_r: list[float | None]
    counters: dict[str, dict[str, list[float]]]
    exact_mean: list[float | None]
    pmf: list[float]
    poisson: dict[str, Any] | None
    prob_h: list[list[dict[str, Any]]]
    prob_h_at_r: list[float]
    curves: dict[str, Any]
    hitting: dict[str, dict[str, Any] | None]
    process: dict[str, dict[str, Any] | None]
    pairing: dict[str, list[float]]
    invariants: dict[str, Any]
    connectivity_mean: float | None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AggregateStats:
        return cls(**data)


def _dk_for(dk: dict[int, float], k: int, d: int) -> float:
    return dk[threshold_degree(k, d)]


def aggregate(summaries: Sequence[TrialSummary], params: TrialParams, dk: dict[int, float],
              rejected: int = 0, process_t0: float = 2.0, process_intervals: int = 4,
              min_samples: int = MIN_SAMPLES) -> AggregateStats:
    """Combine trial summaries in trial order into an AggregateStats."""
    if not summaries:
        raise InsufficientSamples("no trials to aggregate")
    d, k, n = params.d, params.k, params.n
    grid = np.asarray(params.r_grid)
    count = len(summaries)
    covered = [s for s in summaries if s.covered]

    counters = {
        name: _moments(np.array([getattr(s, attr) for s in summaries], dtype=float))
        for name, attr in (("f", "f_at_r"), ("f_pos", "f_pos_at_r"),
                           ("f_neg", "f_neg_at_r"), ("f_of", "f_of_at_r"))
    }
    exact = [None] + [
        exact_mean_F(n, d, j, min(params.r, params.r_cap), params.r_cap, dk[j]) for j in range(1, d + 1)
    ]
    lam_at_r = [None] + [effective_lambda(n, d, j, params.r) for j in range(1, d + 1)]

    f_k = np.array([s.f_at_r[k] for s in summaries], dtype=np.int64)
    pmf = (np.bincount(f_k) / count).tolist()
    rate = dk[k] * math.exp(-lam_at_r[k])
    try:
        poisson = asdict(poisson_fit(f_k, rate, min_samples=min_samples))
    except InsufficientSamples as exc:
        log.info("Poisson fit skipped: %s", exc)
        poisson = None

    prob_h: list[list[dict[str, Any]]] = []
    for j in range(1, d + 1):
        row = []
        for idx, (lam, radius) in enumerate(zip(params.lambda_grid, params.lambda_radii[j - 1])):
            hits = sum(s.holds(j, radius) for s in summaries)
            inst = sum(s.betti_on_grid[j - 1][idx] == torus_betti(d, j) for s in summaries)
            low, high = binomial_ci(hits, count)
            row.append({
                "lambda": lam,
                "radius": radius,
                "empirical": hits / count,
                "limit": limit_prob_hk(d, j, lam, _dk_for(dk, j, d)),
                "instantaneous": inst / count,
                "ci_low": low,
                "ci_high": high,
            })
        prob_h.append(row)
    prob_h_at_r = [sum(s.holds(j, params.r) for s in summaries) / count for j in range(1, d + 1)]

    betti = np.array([s.betti_curve for s in summaries], dtype=float)
    f_curves = np.array([s.f_curve for s in summaries], dtype=float)
    expected_betti = np.array([torus_betti(d, j) for j in range(d + 1)])
    curves = {
        "r_grid": grid.tolist(),
        "betti_mean": betti.mean(axis=0).tolist(),
        "f_mean": f_curves.mean(axis=0).tolist(),
        "f_exact": [[0.0] * len(grid)] + [
            [exact_mean_F(n, d, j, float(r), params.r_cap, dk[j]) for r in grid] for j in range(1, d + 1)
        ],
        "prob_h": [[0.0] * len(grid)] + [
            [sum(s.holds(j, float(r)) for s in summaries) / count for r in grid] for j in range(1, d + 1)
        ],
        "prob_h_limit": [[0.0] * len(grid)] + [
            [limit_prob_hk(d, j, effective_lambda(n, d, threshold_degree(j, d), float(r)), _dk_for(dk, j, d))
             for r in grid]
            for j in range(1, d + 1)
        ],
        "prob_inst": (betti == expected_betti[None, :, None]).mean(axis=0).tolist(),
    }

    hitting: dict[str, dict[str, Any] | None] = {}
    for j in range(1, d + 1):
        times = [s.stabilization[j] for s in covered if s.stabilization[j] is not None]
        matches = [s.isolation_matches[j] for s in covered]
        try:
            hitting[str(j)] = asdict(hitting_time_fit(times, n, d, j, _dk_for(dk, j, d), matches,
                                                      min_samples=min_samples))
        except InsufficientSamples as exc:
            log.info("Hitting-time fit for k=%d skipped: %s", j, exc)
            hitting[str(j)] = None

    process: dict[str, dict[str, Any] | None] = {}
    for sign in SIGNS:
        try:
            fit = process_fit([s.critical_radii[k] for s in covered], n, d, k, dk[k],
                              t0=process_t0, intervals=process_intervals,
                              positive=[s.critical_positive[k] for s in covered], sign=sign)
            process[sign] = asdict(fit)
        except InsufficientSamples as exc:
            log.info("Process fit (%s) skipped: %s", sign, exc)
            process[sign] = None

    pairing = {
        "fraction_mean": np.mean([s.pairing_fraction for s in summaries], axis=0).tolist(),
        "identity_frequency": [
            float(np.mean([s.f_pos_at_r[j] == s.f_neg_at_r[j + 1] for s in summaries])) for j in range(d)
        ],
        "paired_identity_frequency": [
            float(np.mean([s.f_pos_at_r[j] == s.f_neg_at_r[j + 1] == s.f_of_at_r[j + 1] for s in summaries]))
            for j in range(d)
        ],
        "violation_frequency": [
            float(np.mean([s.f_of_at_r[j + 1] > s.f_pos_at_r[j] for s in summaries]))
            for j in range(d)
        ],
        "positive_only_frequency": [
            float(np.mean([s.f_at_r[j] == s.f_pos_at_r[j] for s in summaries])) for j in range(d + 1)
        ],
    }

    target_bookkeeping = [torus_betti(d, j) for j in range(d + 1)]
    invariants = {
        "checked_trials": len(covered),
        "counters_consistent": all(s.counters_consistent for s in summaries),
        "euler_zero": all(s.euler == 0 for s in covered),
        "bookkeeping": all(s.bookkeeping == target_bookkeeping for s in covered),
    }
    connectivity = [s.connectivity_time for s in summaries if s.connectivity_time is not None]

    return AggregateStats(
        d=d,
        k=k,
        n=n,
        r=params.r,
        r_cap=params.r_cap,
        trials=count,
        covered=len(covered),
        rejected=rejected,
        dk={str(j): float(v) for j, v in sorted(dk.items())},
        lam_at_r=lam_at_r,
        counters=counters,
        exact_mean=exact,
        pmf=pmf,
        poisson=poisson,
        prob_h=prob_h,
        prob_h_at_r=prob_h_at_r,
        curves=curves,
        hitting=hitting,
        process=process,
        pairing=pairing,
        invariants=invariants,
        connectivity_mean=float(np.mean(connectivity)) if connectivity else None,
    )


# ------------------------------------------------------------------
# Acceptance
# ------------------------------------------------------------------

@dataclass(frozen=True)
class AcceptanceCheck:
    name: str
    passed: bool
    detail: str


def _within_3se(mean: float, target: float, se: float) -> bool:
    if se > 0:
        return abs(mean - target) <= 3 * se
    return math.isclose(mean, target, abs_tol=1e-12)


def _phase_transition(agg: AggregateStats) -> AcceptanceCheck | None:
    """P(H) >= 0.9 at λ >= +3 and <= 0.1 at λ <= -3, in every degree."""
    failures, seen = [], 0
    for j, row in enumerate(agg.prob_h, start=1):
        for cell in row:
            lam, p = cell["lambda"], cell["empirical"]
            if lam >= PHASE_LAMBDA:
                seen += 1
                if p < PHASE_LEVEL:
                    failures.append(f"k={j} λ={lam:g} P={p:.3g}")
            elif lam <= -PHASE_LAMBDA:
                seen += 1
                if p > 1 - PHASE_LEVEL:
                    failures.append(f"k={j} λ={lam:g} P={p:.3g}")
    if not seen:
        return None
    detail = "; ".join(failures) if failures else f"{seen} grid cells on the expected side"
    return AcceptanceCheck("phase_transition", not failures, detail)


def _limit_within_ci(agg: AggregateStats) -> AcceptanceCheck | None:
    """The limiting probability of H_k lies in the binomial CI at every λ."""
    row = agg.prob_h[agg.k - 1] if agg.k - 1 < len(agg.prob_h) else []
    if not row:
        return None
    misses = [
        f"λ={c['lambda']:g} limit={c['limit']:.3g} ci=[{c['ci_low']:.3g}, {c['ci_high']:.3g}]"
        for c in row
        if not c["ci_low"] <= c["limit"] <= c["ci_high"]
    ]
    detail = "; ".join(misses) if misses else f"{len(row)} λ values inside the 99% CI"
    return AcceptanceCheck("limit_within_ci", not misses, detail)


def _pairing(agg: AggregateStats) -> AcceptanceCheck | None:
    k, d = agg.k, agg.d
    if not 1 <= k <= d - 2:
        return None
    fraction = agg.pairing["fraction_mean"][k]
    identity = agg.pairing["identity_frequency"][k]
    ok = fraction >= PAIRING_LEVEL and identity >= PAIRING_LEVEL
    return AcceptanceCheck(
        "pairing_structure", ok, f"fraction={fraction:.4g} identity_frequency={identity:.4g}")


def _hitting(agg: AggregateStats) -> list[AcceptanceCheck]:
    fits = {j: fit for j, fit in sorted(agg.hitting.items()) if fit is not None}
    if not fits:
        return []
    off = [
        f"k={j} mean={f['mean']:.4g} target={f['target_mean']:.4g} se={f['std_error']:.3g}"
        for j, f in fits.items()
        if not _within_3se(f["mean"], f["target_mean"], f["std_error"])
    ]
    checks = [AcceptanceCheck(
        "hitting_within_3se", not off, "; ".join(off) if off else f"{len(fits)} laws within 3 SE")]
    iso = {j: f["iso_frequency"] for j, f in fits.items() if f["iso_frequency"] is not None}
    if iso:
        low = {j: v for j, v in iso.items() if v < ISO_LEVEL}
        detail = " ".join(f"k={j}:{v:.3g}" for j, v in iso.items())
        checks.append(AcceptanceCheck("iso_agreement", not low, detail))
    return checks


def _process(agg: AggregateStats) -> list[AcceptanceCheck]:
    fit = agg.process.get("all")
    if fit is None:
        return []
    off = [
        f"[{a:g},{b:g}] mean={m:.4g} expected={e:.4g}"
        for a, b, m, se, e in zip(fit["edges"], fit["edges"][1:], fit["mean"], fit["std_error"], fit["expected"])
        if not _within_3se(m, e, se)
    ]
    corr = fit["max_abs_correlation"]
    return [
        AcceptanceCheck("process_means", not off,
                        "; ".join(off) if off else f"{len(fit['mean'])} intervals within 3 SE"),
        AcceptanceCheck("process_correlation", corr <= MAX_CORRELATION, f"max |corr|={corr:.3g}"),
    ]


def evaluate_acceptance(agg: AggregateStats) -> list[AcceptanceCheck]:
    """Pass/fail checks on the configured degree; exit status 2 if any fails.

    Checks whose inputs are missing from the aggregate (no λ at ±3, no
    hitting-time fit, too few covered trials) are left out.
    """
    k = agg.k
    checks: list[AcceptanceCheck] = []
    mean = agg.counters["f"]["mean"][k]
    se = agg.counters["f"]["std_error"][k]
    var = agg.counters["f"]["variance"][k]
    exact = agg.exact_mean[k]
    if exact is not None:
        checks.append(AcceptanceCheck(
            "mean_within_3se", bool(_within_3se(mean, exact, se)),
            f"mean={mean:.6g} exact={exact:.6g} se={se:.3g}"))
    if mean > 0:
        ratio = var / mean
        checks.append(AcceptanceCheck(
            "variance_over_mean", 0.75 <= ratio <= 1.25, f"var/mean={ratio:.4g}"))
    else:
        checks.append(AcceptanceCheck("variance_over_mean", False, "mean is zero"))
    if agg.poisson is not None:
        tv = agg.poisson["tv"]
        checks.append(AcceptanceCheck("poisson_tv", tv <= 0.1, f"tv={tv:.4g}"))
    for check in (_phase_transition(agg), _limit_within_ci(agg), _pairing(agg)):
        if check is not None:
            checks.append(check)
    checks.extend(_hitting(agg))
    checks.extend(_process(agg))
    inv = agg.invariants
    ok = bool(inv["counters_consistent"] and inv["euler_zero"] and inv["bookkeeping"])
    checks.append(AcceptanceCheck(
        "exact_invariants", ok,
        f"counters={inv['counters_consistent']} euler={inv['euler_zero']} "
        f"bookkeeping={inv['bookkeeping']} over {inv['checked_trials']} covered trials"))
    for c in checks:
        log.info("acceptance %-20s %s  %s", c.name, "PASS" if c.passed else "FAIL", c.detail)
    return checks
