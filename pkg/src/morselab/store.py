"""SQLite schema and async query helpers for experiment results."""

from __future__ import annotations

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import aiosqlite

from morselab.trial import Rejection, TrialSummary

log = logging.getLogger(__name__)

_SCHEMA_VERSION = 1

_SCHEMA_SQL = """\
CREATE TABLE IF NOT EXISTS _meta (
    key   TEXT PRIMARY KEY,
    value TEXT
);

CREATE TABLE IF NOT EXISTS experiments (
    id          INTEGER PRIMARY KEY AUTOINCREMENT,
    config      TEXT NOT NULL,
    master_seed INTEGER NOT NULL,
    version     TEXT NOT NULL,
    trials      INTEGER NOT NULL DEFAULT 0,
    rejected    INTEGER NOT NULL DEFAULT 0,
    created_at  TEXT NOT NULL DEFAULT (strftime('%Y-%m-%dT%H:%M:%SZ', 'now'))
);

CREATE TABLE IF NOT EXISTS trials (
    experiment_id INTEGER NOT NULL REFERENCES experiments(id),
    trial         INTEGER NOT NULL,
    seed          TEXT NOT NULL,
    attempt       INTEGER NOT NULL,
    covered       INTEGER NOT NULL,
    summary       TEXT NOT NULL,
    PRIMARY KEY (experiment_id, trial)
);

CREATE TABLE IF NOT EXISTS rejections (
    id            INTEGER PRIMARY KEY AUTOINCREMENT,
    experiment_id INTEGER NOT NULL REFERENCES experiments(id),
    trial         INTEGER NOT NULL,
    attempt       INTEGER NOT NULL,
    seed          TEXT NOT NULL,
    reason        TEXT
);

CREATE INDEX IF NOT EXISTS idx_rejections_experiment ON rejections(experiment_id);
"""


def _now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


async def init_store(db_path: str) -> aiosqlite.Connection:
    """Open (or create) the result store and apply schema."""
    path = Path(db_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    db = await aiosqlite.connect(str(path))
    db.row_factory = aiosqlite.Row
    await db.execute("PRAGMA journal_mode=WAL")
    await db.execute("PRAGMA busy_timeout=5000")
    await db.execute("PRAGMA synchronous=NORMAL")
    await db.executescript(_SCHEMA_SQL)
    await db.execute(
        "INSERT OR IGNORE INTO _meta (key, value) VALUES (?, ?)",
        ("schema_version", str(_SCHEMA_VERSION)),
    )
    await db.commit()
    log.info("Result store ready: %s", path)
    return db


async def open_readonly(db_path: str) -> aiosqlite.Connection:
    """Open the store read-only."""
    db = await aiosqlite.connect(f"file:{db_path}?mode=ro", uri=True)
    db.row_factory = aiosqlite.Row
    await db.execute("PRAGMA busy_timeout=10000")
    return db


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

async def create_experiment(db: aiosqlite.Connection, config: dict[str, Any], master_seed: int,
                            version: str) -> int:
    cur = await db.execute(
        "INSERT INTO experiments (config, master_seed, version, created_at) VALUES (?, ?, ?, ?)",
        (json.dumps(config, sort_keys=True), master_seed, version, _now_iso()),
    )
    await db.commit()
    return int(cur.lastrowid)


async def finish_experiment(db: aiosqlite.Connection, experiment_id: int, trials: int,
                            rejected: int) -> None:
    await db.execute(
        "UPDATE experiments SET trials = ?, rejected = ? WHERE id = ?",
        (trials, rejected, experiment_id),
    )
    await db.commit()


async def get_experiment(db: aiosqlite.Connection, experiment_id: int | None = None) -> dict | None:
    """One experiment row by id, or the most recent one."""
    if experiment_id is None:
        rows = await db.execute_fetchall("SELECT * FROM experiments ORDER BY id DESC LIMIT 1")
    else:
        rows = await db.execute_fetchall("SELECT * FROM experiments WHERE id = ?", [experiment_id])
    if not rows:
        return None
    row = dict(rows[0])
    row["config"] = json.loads(row["config"])
    return row


# ---------------------------------------------------------------------------
# Trials and rejections
# ---------------------------------------------------------------------------

async def insert_trials_bulk(db: aiosqlite.Connection, experiment_id: int,
                             summaries: Sequence[TrialSummary]) -> int:
    if not summaries:
        return 0
    sql = (
        "INSERT INTO trials (experiment_id, trial, seed, attempt, covered, summary) "
        "VALUES (?, ?, ?, ?, ?, ?)"
    )
    await db.executemany(sql, [
        (experiment_id, s.trial, json.dumps(s.seed), s.attempt, int(s.covered),
         json.dumps(s.to_dict(), sort_keys=True))
        for s in summaries
    ])
    return len(summaries)


async def insert_rejections_bulk(db: aiosqlite.Connection, experiment_id: int,
                                 rejections: Sequence[Rejection]) -> int:
    if not rejections:
        return 0
    await db.executemany(
        "INSERT INTO rejections (experiment_id, trial, attempt, seed, reason) VALUES (?, ?, ?, ?, ?)",
        [(experiment_id, r.trial, r.attempt, json.dumps(r.seed), r.reason) for r in rejections],
    )
    return len(rejections)


async def load_trials(db: aiosqlite.Connection, experiment_id: int) -> list[TrialSummary]:
    rows = await db.execute_fetchall(
        "SELECT summary FROM trials WHERE experiment_id = ? ORDER BY trial", [experiment_id]
    )
    return [TrialSummary.from_dict(json.loads(r["summary"])) for r in rows]


async def load_rejections(db: aiosqlite.Connection, experiment_id: int) -> list[Rejection]:
    rows = await db.execute_fetchall(
        "SELECT trial, attempt, seed, reason FROM rejections WHERE experiment_id = ? ORDER BY id",
        [experiment_id],
    )
    return [Rejection(trial=r["trial"], attempt=r["attempt"], seed=json.loads(r["seed"]),
                      reason=r["reason"]) for r in rows]


# ---------------------------------------------------------------------------
# Stats
# ---------------------------------------------------------------------------

async def stats(db: aiosqlite.Connection) -> dict:
    """Return summary counts for the status command."""
    result: dict[str, Any] = {}
    for table in ("experiments", "trials", "rejections"):
        row = await db.execute_fetchall(f"SELECT COUNT(*) AS cnt FROM {table}")
        result[table] = row[0]["cnt"] if row else 0
    row = await db.execute_fetchall("SELECT COUNT(*) AS cnt FROM trials WHERE covered = 1")
    result["covered"] = row[0]["cnt"] if row else 0
    latest = await get_experiment(db)
    result["latest"] = latest["id"] if latest else None
    return result
