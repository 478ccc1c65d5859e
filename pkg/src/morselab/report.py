"""Write experiment reports: JSON aggregate, per-trial tables, curve CSVs.

Everything written here is a pure function of its inputs; no timestamps go
into report files, so identical experiments produce identical bytes.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pyarrow as pa
import pyarrow.csv as pacsv
import pyarrow.parquet as pq

from morselab import __version__
from morselab.cech import Filtration
from morselab.errors import ReportIOError
from morselab.morse import CriticalFace
from morselab.persistence import Persistence
from morselab.stats import AggregateStats
from morselab.trial import TrialSummary

log = logging.getLogger(__name__)

REPORT_SCHEMA = 1
REPORT_NAME = "report.json"


def _require_dir(out_dir: str | Path) -> Path:
    path = Path(out_dir)
    if not path.is_dir():
        raise ReportIOError(f"output directory does not exist: {path}")
    return path


# ------------------------------------------------------------------
# Per-trial records
# ------------------------------------------------------------------

def trial_record(s: TrialSummary) -> dict[str, Any]:
    """Flatten a summary into scalar columns."""
    d = len(s.f_at_r) - 1
    rec: dict[str, Any] = dict(
        trial=s.trial,
        seed=":".join(str(x) for x in s.seed),
        attempt=s.attempt,
        points=s.points,
        covered=s.covered,
        coverage_radius=s.coverage_radius,
        euler=s.euler,
    )
    for k in range(d + 1):
        rec[f"f_{k}"] = s.f_at_r[k]
        rec[f"f_pos_{k}"] = s.f_pos_at_r[k]
        rec[f"f_neg_{k}"] = s.f_neg_at_r[k]
        rec[f"f_of_{k}"] = s.f_of_at_r[k]
        rec[f"t_{k}"] = s.stabilization[k]
        rec[f"t_iso_{k}"] = s.isolation[k]
        rec[f"iso_match_{k}"] = s.isolation_matches[k]
    for k, frac in enumerate(s.pairing_fraction):
        rec[f"pairing_fraction_{k}"] = frac
    return rec


def _trial_table(summaries: Sequence[TrialSummary]) -> pa.Table:
    records = [trial_record(s) for s in summaries]
    table = pa.Table.from_pylist(records)
    # Columns that are null in every row come back as the null type; keep them numeric.
    fields = [
        pa.field(f.name, pa.float64()) if pa.types.is_null(f.type) else f
        for f in table.schema
    ]
    return table.cast(pa.schema(fields))


def write_trials(summaries: Sequence[TrialSummary], out_dir: str | Path) -> tuple[Path, Path]:
    out = _require_dir(out_dir)
    table = _trial_table(summaries)
    csv_path, parquet_path = out / "trials.csv", out / "trials.parquet"
    try:
        pacsv.write_csv(table, str(csv_path))
        pq.write_table(table, str(parquet_path))
    except OSError as exc:
        raise ReportIOError(f"cannot write trial tables in {out}: {exc}") from exc
    return csv_path, parquet_path


# ------------------------------------------------------------------
# Curves
# ------------------------------------------------------------------

def write_curve(path: Path, x, y, xlabel: str, ylabel: str) -> Path:
    """Two-column CSV, sorted by abscissa, with a '#'-prefixed header."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(x, kind="stable")
    try:
        np.savetxt(path, np.column_stack([x[order], y[order]]), delimiter=",",
                   header=f"{xlabel},{ylabel}", comments="# ", fmt="%.17g")
    except OSError as exc:
        raise ReportIOError(f"cannot write curve {path}: {exc}") from exc
    return path


_CURVES = (
    ("betti", "betti_mean"),
    ("f_mean", "f_mean"),
    ("f_exact", "f_exact"),
    ("prob_h", "prob_h"),
    ("prob_h_limit", "prob_h_limit"),
    ("prob_inst", "prob_inst"),
)


def write_curves(agg: AggregateStats, out_dir: str | Path) -> list[Path]:
    out = _require_dir(out_dir)
    grid = agg.curves["r_grid"]
    written = []
    for stem, key in _CURVES:
        rows = agg.curves[key]
        degrees = range(len(rows)) if stem == "betti" else range(1, len(rows))
        for k in degrees:
            written.append(write_curve(out / f"{stem}_{k}.csv", grid, rows[k], "r", f"{stem}_{k}"))
    return written


# ------------------------------------------------------------------
# JSON report
# ------------------------------------------------------------------

def build_report(agg: AggregateStats, config: dict[str, Any], master_seed: int) -> dict[str, Any]:
    return {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "config": config,
        "master_seed": master_seed,
        "r": agg.r,
        "r_cap": agg.r_cap,
        "dk": agg.dk,
        "stats": agg.to_dict(),
    }


def emit_report(agg: AggregateStats, summaries: Sequence[TrialSummary], config: dict[str, Any],
                master_seed: int, out_dir: str | Path) -> Path:
    """Write report.json, the per-trial tables and every curve into *out_dir*."""
    out = _require_dir(out_dir)
    path = out / REPORT_NAME
    text = json.dumps(build_report(agg, config, master_seed), sort_keys=True, indent=2,
                      allow_nan=False)
    try:
        path.write_text(text + "\n", encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc
    write_trials(summaries, out)
    curves = write_curves(agg, out)
    log.info("REPORT complete: %s (%d trials, %d curves)", path, len(summaries), len(curves))
    return path


def load_report(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_NAME
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc


def load_stats(path: str | Path) -> AggregateStats:
    return AggregateStats.from_dict(load_report(path)["stats"])


def write_json(payload: dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc
    return path


# ------------------------------------------------------------------
# Single-trial tables
# ------------------------------------------------------------------

def _write_table(columns: dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    try:
        pacsv.write_csv(pa.table(columns), str(path))
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc
    return path


def write_filtration_csv(filtration: Filtration, path: str | Path) -> Path:
    """Columns dim,value,v0..v{top}; vertices past a simplex's dimension are empty."""
    columns: dict[str, Any] = {
        "dim": filtration.dims,
        "value": filtration.values,
    }
    for j in range(filtration.vertices.shape[1]):
        col = filtration.vertices[:, j]
        columns[f"v{j}"] = pa.array(col, mask=col < 0)
    return _write_table(columns, path)


def write_critical_csv(criticals: Sequence[CriticalFace], d: int, path: str | Path) -> Path:
    """Columns dim,rho,phi,sign,nearest_facet_rho,c0..c{d-1}."""
    columns: dict[str, list] = {
        "dim": [c.dim for c in criticals],
        "rho": [c.rho for c in criticals],
        "phi": [c.phi for c in criticals],
        "sign": [c.sign.value if c.sign is not None else None for c in criticals],
        "nearest_facet_rho": [
            c.nearest_facet_rho if c.nearest_facet_rho is not None else float("nan") for c in criticals
        ],
    }
    for i in range(d):
        columns[f"c{i}"] = [float(c.center[i]) for c in criticals]
    return _write_table(columns, path)


def write_diagram_csv(persistence: Persistence, path: str | Path) -> Path:
    """Columns k,birth,death; essential classes die at inf."""
    diagram = persistence.diagram()
    return _write_table({
        "k": [k for k, _, _ in diagram],
        "birth": [b for _, b, _ in diagram],
        "death": [x for _, _, x in diagram],
    }, path)
