"""CLI entry-point for torus-morse-lab."""

from __future__ import annotations

import asyncio
import json
import logging
import sqlite3
import sys
from pathlib import Path
from typing import Awaitable, Callable

import click

from morselab.config import load_config, resolve_workers
from morselab.errors import MorseLabError

log = logging.getLogger("morselab")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ACCEPTANCE = 2


def _setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)-7s %(name)s  %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
    )


def _execute(ctx: click.Context, main: Callable[[], Awaitable[int | None]]) -> None:
    """Run *main* and map failures to exit codes."""
    try:
        code = asyncio.run(main())
    except KeyboardInterrupt:
        log.info("Interrupted.")
        code = EXIT_ERROR
    except (MorseLabError, OSError, sqlite3.Error) as exc:
        log.error("%s", exc, exc_info=True)
        code = EXIT_ERROR
    ctx.exit(code or EXIT_OK)


def _echo_json(payload: dict) -> None:
    click.echo(json.dumps(payload, sort_keys=True, indent=2))


@click.group()
@click.option("-c", "--config", "config_path", default=None, help="Path to config.toml or config.json")
@click.option("-v", "--verbose", is_flag=True, default=False)
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, verbose: bool) -> None:
    """torus-morse-lab: Monte Carlo experiments on random Čech complexes of the flat torus."""
    _setup_logging(verbose)
    ctx.ensure_object(dict)
    try:
        ctx.obj["cfg"] = load_config(config_path)
    except MorseLabError as exc:
        log.error("%s", exc)
        ctx.exit(EXIT_ERROR)


def _emit(result, cfg, out_dir: Path) -> int:
    from dataclasses import asdict

    from morselab.report import emit_report
    from morselab.stats import evaluate_acceptance

    out_dir.mkdir(parents=True, exist_ok=True)
    path = emit_report(result.stats, result.summaries, asdict(cfg.experiment),
                       cfg.experiment.master_seed, out_dir)
    click.echo(f"Report written to {path}")
    checks = evaluate_acceptance(result.stats)
    for c in checks:
        click.echo(f"  {'PASS' if c.passed else 'FAIL'}  {c.name:<20} {c.detail}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_ACCEPTANCE


@cli.command()
@click.option("--d", "d", type=int, default=None)
@click.option("--k", "k", type=int, default=None)
@click.option("--n", "n", type=float, default=None)
@click.option("--lambda", "lam", type=float, default=None)
@click.option("--r", "r", type=float, default=None, help="Explicit radius (overrides --lambda)")
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", default=None, help="Report directory")
@click.option("--workers", type=int, default=None)
@click.pass_context
def run(ctx: click.Context, d, k, n, lam, r, trials, seed, out_dir, workers) -> None:
    """Run an experiment, store it and write its report."""
    from morselab.runner import run_experiment
    from morselab.store import init_store

    cfg = ctx.obj["cfg"]
    exp = cfg.experiment
    for name, value in (("d", d), ("k", k), ("n", n), ("trials", trials), ("master_seed", seed)):
        if value is not None:
            setattr(exp, name, value)
    if lam is not None:
        exp.lam, exp.r = lam, None
    if r is not None:
        exp.r = r
    if out_dir is not None:
        cfg.general.output_dir = str(Path(out_dir).expanduser().resolve())

    async def _main() -> int:
        n_workers = resolve_workers(workers, cfg)
        db = await init_store(cfg.general.db_path)
        try:
            result = await run_experiment(cfg, db, n_workers)
        finally:
            await db.close()
        click.echo(f"Experiment {result.experiment_id}: {result.stats.trials} trials, "
                   f"{result.stats.covered} covered, {result.stats.rejected} rejected")
        return _emit(result, cfg, Path(cfg.general.output_dir))

    _execute(ctx, _main)


@cli.command("estimate-dk")
@click.option("--d", "d", type=int, required=True)
@click.option("--k", "k", type=int, required=True)
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.pass_context
def estimate_dk_cmd(ctx: click.Context, d, k, samples, seed, workers) -> None:
    """Monte Carlo estimate of the constant D_k, printed as JSON."""
    from morselab.limits import estimate_dk

    cfg = ctx.obj["cfg"]

    async def _main() -> int:
        est = estimate_dk(
            d, k,
            samples if samples is not None else cfg.limits.dk_samples,
            seed if seed is not None else cfg.limits.dk_seed,
            workers=resolve_workers(workers, cfg),
        )
        _echo_json(est.as_dict())
        return EXIT_OK

    _execute(ctx, _main)


@cli.command("verify-bp")
@click.option("--d", "d", type=int, default=2)
@click.option("--k", "k", type=int, required=True)
@click.option("--sphere", is_flag=True, default=False, help="Check the sphere formula instead")
@click.option("--f", "f", default=None, help="Test function (ball/zero/smooth, or radius_above/one/zero)")
@click.option("--radius", type=float, default=None)
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--tolerance", type=float, default=0.02, show_default=True)
@click.option("--workers", type=int, default=None)
@click.pass_context
def verify_bp(ctx: click.Context, d, k, sphere, f, radius, samples, seed, tolerance, workers) -> None:
    """Compare both sides of a Blaschke–Petkantschin change of variables."""
    from morselab.limits import verify_bp_sphere, verify_bp_torus

    cfg = ctx.obj["cfg"]

    async def _main() -> int:
        n_samples = samples if samples is not None else cfg.limits.bp_samples
        n_workers = resolve_workers(workers, cfg)
        if sphere:
            check = verify_bp_sphere(k, n_samples, seed, f=f or "radius_above",
                                     t0=cfg.limits.sphere_t0, workers=n_workers)
        else:
            check = verify_bp_torus(d, k, radius or cfg.limits.bp_radius, n_samples, seed,
                                    f=f or "ball", workers=n_workers)
        _echo_json(check.as_dict())
        return EXIT_OK if check.relative_error <= tolerance else EXIT_ACCEPTANCE

    _execute(ctx, _main)


@cli.command()
@click.option("--experiment-id", type=int, default=None, help="Defaults to the latest experiment")
@click.option("--out", "out_dir", default=None)
@click.pass_context
def report(ctx: click.Context, experiment_id, out_dir) -> None:
    """Re-aggregate a stored experiment and rewrite its report."""
    from morselab.runner import ExperimentResult, ExperimentRunner, dk_table, replan
    from morselab.store import get_experiment, load_rejections, load_trials, open_readonly

    cfg = ctx.obj["cfg"]

    async def _main() -> int:
        db = await open_readonly(cfg.general.db_path)
        try:
            row = await get_experiment(db, experiment_id)
            if row is None:
                click.echo("No experiment found.")
                return EXIT_ERROR
            summaries = await load_trials(db, row["id"])
            rejections = await load_rejections(db, row["id"])
        finally:
            await db.close()
        stored = replan(cfg, row["config"])
        runner = ExperimentRunner(stored, None, resolve_workers(None, stored))
        agg = runner.run_aggregate(summaries, len(rejections),
                                   dk_table(stored, runner.params.d, runner.workers))
        result = ExperimentResult(row["id"], runner.params, summaries, rejections, agg)
        target = Path(out_dir).expanduser().resolve() if out_dir else Path(cfg.general.output_dir)
        return _emit(result, stored, target)

    _execute(ctx, _main)


@cli.command()
@click.option("--d", "d", type=int, default=2)
@click.option("--n", "n", type=float, default=200.0)
@click.option("--seed", type=int, default=0)
@click.option("--trial", type=int, default=0)
@click.option("--r-max", "r_max", type=float, default=None)
@click.option("--out", "out_dir", default=None)
@click.pass_context
def inspect(ctx: click.Context, d, n, seed, trial, r_max, out_dir) -> None:
    """Sample one cloud and dump its filtration, critical faces and diagram."""
    from morselab.cech import build_filtration
    from morselab.morse import assign_signs, detect_critical_faces
    from morselab.persistence import reduce_persistence
    from morselab.report import write_critical_csv, write_diagram_csv, write_filtration_csv
    from morselab.sampler import sample, write_cloud_csv

    cfg = ctx.obj["cfg"]

    async def _main() -> int:
        cap = r_max if r_max is not None else cfg.experiment.r_max
        out = Path(out_dir or cfg.general.output_dir).expanduser().resolve()
        out.mkdir(parents=True, exist_ok=True)
        cloud = sample(n, d, seed, trial=trial, r_max=cap)
        filtration = build_filtration(cloud, r_max=cap)
        persistence = reduce_persistence(filtration)
        criticals = assign_signs(detect_critical_faces(filtration, cloud), persistence)
        write_cloud_csv(cloud, out / "cloud.csv")
        write_filtration_csv(filtration, out / "filtration.csv")
        write_critical_csv(criticals, d, out / "critical_faces.csv")
        write_diagram_csv(persistence, out / "diagram.csv")
        betti = persistence.betti_at(cap, max_degree=d)
        click.echo(f"{len(cloud)} points, {len(filtration)} simplices, {len(criticals)} critical faces")
        click.echo(f"Betti numbers at r={cap:g}: {betti.tolist()}")
        click.echo(f"Tables written to {out}")
        return EXIT_OK

    _execute(ctx, _main)


@cli.command()
@click.pass_context
def status(ctx: click.Context) -> None:
    """Show result-store statistics."""
    from morselab.store import open_readonly, stats

    cfg = ctx.obj["cfg"]

    async def _main() -> int:
        db = await open_readonly(cfg.general.db_path)
        try:
            s = await stats(db)
            click.echo(f"Experiments: {s['experiments']}  (latest={s['latest']})")
            click.echo(f"Trials:      {s['trials']}  covered={s['covered']}")
            click.echo(f"Rejections:  {s['rejections']}")
        finally:
            await db.close()
        return EXIT_OK

    _execute(ctx, _main)
