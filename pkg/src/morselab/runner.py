"""Experiment orchestration: plan, run trial blocks, persist, aggregate."""

from __future__ import annotations

import asyncio
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import aiosqlite
import numpy as np

from morselab import __version__
from morselab.config import Config
from morselab.errors import RejectionRateExceeded
from morselab.limits import dk_closed_form, estimate_dk
from morselab.stats import AggregateStats, aggregate
from morselab.store import (
    create_experiment,
    finish_experiment,
    insert_rejections_bulk,
    insert_trials_bulk,
)
from morselab.trial import Rejection, TrialParams, TrialSummary, run_block

log = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    experiment_id: int | None
    params: TrialParams
    summaries: list[TrialSummary]
    rejections: list[Rejection]
    stats: AggregateStats


def dk_table(cfg: Config, d: int, workers: int = 1) -> dict[int, float]:
    """D_1..D_d from closed forms where known, Monte Carlo otherwise."""
    table: dict[int, float] = {}
    for k in range(1, d + 1):
        exact = dk_closed_form(d, k)
        if exact is not None:
            table[k] = exact
        else:
            table[k] = estimate_dk(d, k, cfg.limits.dk_samples, cfg.limits.dk_seed, workers=workers).mean
    log.info("D_k table (d=%d): %s", d, ", ".join(f"D_{k}={v:.6g}" for k, v in table.items()))
    return table


def plan(cfg: Config) -> TrialParams:
    exp = cfg.experiment
    exp.validate()
    return TrialParams.build(
        n=exp.n, d=exp.d, k=exp.k, r=exp.radius(), r_max=exp.r_max,
        lambda_cap=exp.lambda_cap, r_grid_points=exp.r_grid_points,
        lambda_grid=tuple(exp.lambda_grid), max_attempts=exp.max_attempts,
    )


def blocks(trials: int, workers: int) -> list[list[int]]:
    """Static assignment of trial indices, one contiguous block per worker."""
    parts = np.array_split(np.arange(trials), max(1, min(workers, trials)))
    return [[int(t) for t in part] for part in parts if len(part)]


class ExperimentRunner:
    """Runs the trials of one experiment and records them."""

    def __init__(self, cfg: Config, db: aiosqlite.Connection | None = None, workers: int = 1) -> None:
        self.cfg = cfg
        self.db = db
        self.workers = workers
        self.params = plan(cfg)
        self.experiment_id: int | None = None
        self._pool: ProcessPoolExecutor | None = None

    async def start(self) -> None:
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=self.workers)
        if self.db is not None:
            self.experiment_id = await create_experiment(
                self.db, asdict(self.cfg.experiment), self.cfg.experiment.master_seed, __version__
            )
        log.info(
            "Runner started (d=%d, k=%d, n=%g, r=%.6g, r_cap=%.6g, trials=%d, workers=%d)",
            self.params.d, self.params.k, self.params.n, self.params.r, self.params.r_cap,
            self.cfg.experiment.trials, self.workers,
        )

    async def stop(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None
        log.info("Runner stopped")

    # ------------------------------------------------------------------
    # Phase runners
    # ------------------------------------------------------------------

    async def run_trials(self) -> tuple[list[TrialSummary], list[Rejection]]:
        """TRIALS phase: every block runs in order; results merge in trial order."""
        exp = self.cfg.experiment
        jobs = blocks(exp.trials, self.workers)
        if self._pool is None:
            results = [run_block(self.params, exp.master_seed, block) for block in jobs]
        else:
            loop = asyncio.get_running_loop()
            results = await asyncio.gather(*[
                loop.run_in_executor(self._pool, run_block, self.params, exp.master_seed, block)
                for block in jobs
            ])
        summaries: list[TrialSummary] = []
        rejections: list[Rejection] = []
        for block in results:
            for summary, rejected in block:
                summaries.append(summary)
                rejections.extend(rejected)
        log.info("TRIALS complete: %d accepted, %d rejected", len(summaries), len(rejections))
        self._check_rejections(len(summaries), rejections)

        if self.db is not None and self.experiment_id is not None:
            await insert_trials_bulk(self.db, self.experiment_id, summaries)
            await insert_rejections_bulk(self.db, self.experiment_id, rejections)
            await finish_experiment(self.db, self.experiment_id, len(summaries), len(rejections))
        return summaries, rejections

    def _check_rejections(self, accepted: int, rejections: list[Rejection]) -> None:
        rate = len(rejections) / (accepted + len(rejections)) if rejections else 0.0
        if rate <= self.cfg.experiment.max_rejection_rate:
            return
        out = Path(self.cfg.general.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "diagnostics.json"
        path.write_text(json.dumps({
            "rejection_rate": rate,
            "accepted": accepted,
            "rejections": [asdict(r) for r in rejections],
        }, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        log.error("Rejection rate %.3g exceeds %.3g; diagnostics in %s",
                  rate, self.cfg.experiment.max_rejection_rate, path)
        raise RejectionRateExceeded(f"rejection rate {rate:.3g} too high; see {path}", str(path))

    def run_aggregate(self, summaries: list[TrialSummary], rejected: int,
                      dk: dict[int, float]) -> AggregateStats:
        exp = self.cfg.experiment
        agg = aggregate(summaries, self.params, dk, rejected=rejected,
                        process_t0=exp.process_t0, process_intervals=exp.process_intervals)
        log.info("AGGREGATE complete: %d trials, %d covered", agg.trials, agg.covered)
        return agg

    async def run(self) -> ExperimentResult:
        summaries, rejections = await self.run_trials()
        dk = dk_table(self.cfg, self.params.d, self.workers)
        agg = self.run_aggregate(summaries, len(rejections), dk)
        return ExperimentResult(self.experiment_id, self.params, summaries, rejections, agg)


async def run_experiment(cfg: Config, db: aiosqlite.Connection | None = None,
                         workers: int = 1) -> ExperimentResult:
    runner = ExperimentRunner(cfg, db, workers)
    await runner.start()
    try:
        return await runner.run()
    finally:
        await runner.stop()


def replan(cfg: Config, experiment_config: dict) -> Config:
    """A copy of *cfg* whose experiment section is the stored one."""
    from morselab.config import ExperimentConfig

    return Config(general=cfg.general, experiment=ExperimentConfig(**experiment_config), limits=cfg.limits)
