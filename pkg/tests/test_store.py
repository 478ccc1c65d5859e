"""Tests for morselab.store module."""

from __future__ import annotations

import aiosqlite
import pytest

from morselab.store import (
    create_experiment,
    finish_experiment,
    get_experiment,
    init_store,
    insert_rejections_bulk,
    insert_trials_bulk,
    load_rejections,
    load_trials,
    open_readonly,
    stats,
)
from morselab.trial import Rejection


async def test_schema_created(store):
    rows = await store.execute_fetchall(
        "SELECT name FROM sqlite_master WHERE type='table' ORDER BY name"
    )
    names = {r["name"] for r in rows}
    assert {"_meta", "experiments", "trials", "rejections"} <= names
    meta = await store.execute_fetchall("SELECT value FROM _meta WHERE key = 'schema_version'")
    assert meta[0]["value"] == "1"


async def test_init_is_idempotent(tmp_path):
    path = str(tmp_path / "nested" / "again.db")
    first = await init_store(path)
    await first.close()
    second = await init_store(path)
    rows = await second.execute_fetchall("SELECT COUNT(*) AS cnt FROM _meta")
    assert rows[0]["cnt"] == 1
    await second.close()


async def test_experiment_lifecycle(store):
    exp_id = await create_experiment(store, {"d": 1, "k": 1}, master_seed=11, version="0.1.0")
    row = await get_experiment(store, exp_id)
    assert row["config"] == {"d": 1, "k": 1}
    assert row["master_seed"] == 11
    assert row["trials"] == 0

    await finish_experiment(store, exp_id, trials=6, rejected=2)
    row = await get_experiment(store)
    assert row["id"] == exp_id
    assert (row["trials"], row["rejected"]) == (6, 2)


async def test_missing_experiment(store):
    assert await get_experiment(store) is None
    assert await get_experiment(store, 42) is None


async def test_trials_round_trip(store, circle_summaries):
    exp_id = await create_experiment(store, {}, 11, "0.1.0")
    # Inserted out of order; loaded back by trial number.
    shuffled = list(reversed(circle_summaries[:3]))
    assert await insert_trials_bulk(store, exp_id, shuffled) == 3
    await store.commit()
    loaded = await load_trials(store, exp_id)
    assert loaded == circle_summaries[:3]


async def test_empty_bulk_inserts(store):
    exp_id = await create_experiment(store, {}, 1, "0.1.0")
    assert await insert_trials_bulk(store, exp_id, []) == 0
    assert await insert_rejections_bulk(store, exp_id, []) == 0


async def test_rejections_round_trip(store):
    exp_id = await create_experiment(store, {}, 11, "0.1.0")
    rejections = [
        Rejection(trial=3, attempt=0, seed=[11, 3, 0], reason="affinely dependent"),
        Rejection(trial=3, attempt=1, seed=[11, 3, 1], reason="facet tie"),
    ]
    await insert_rejections_bulk(store, exp_id, rejections)
    await store.commit()
    assert await load_rejections(store, exp_id) == rejections


async def test_stats(store, circle_summaries):
    exp_id = await create_experiment(store, {}, 11, "0.1.0")
    await insert_trials_bulk(store, exp_id, circle_summaries)
    await insert_rejections_bulk(store, exp_id, [Rejection(0, 0, [11, 0, 0], "tie")])
    await store.commit()
    result = await stats(store)
    assert result["experiments"] == 1
    assert result["trials"] == len(circle_summaries)
    assert result["rejections"] == 1
    assert result["covered"] == sum(s.covered for s in circle_summaries)
    assert result["latest"] == exp_id


async def test_readonly_connection(tmp_path, circle_summaries):
    path = str(tmp_path / "ro.db")
    db = await init_store(path)
    exp_id = await create_experiment(db, {"n": 80.0}, 11, "0.1.0")
    await insert_trials_bulk(db, exp_id, circle_summaries[:2])
    await db.commit()

    ro = await open_readonly(path)
    try:
        assert len(await load_trials(ro, exp_id)) == 2
        with pytest.raises(aiosqlite.OperationalError):
            await create_experiment(ro, {}, 1, "0.1.0")
    finally:
        await ro.close()
        await db.close()
