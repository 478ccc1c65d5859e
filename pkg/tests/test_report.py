"""Tests for report files: JSON aggregate, trial tables and curves."""

from __future__ import annotations

import json

import numpy as np
import pyarrow.csv as pacsv
import pyarrow.parquet as pq
import pytest

from morselab.errors import ReportIOError
from morselab.report import (
    REPORT_NAME,
    emit_report,
    load_report,
    load_stats,
    trial_record,
    write_critical_csv,
    write_curve,
    write_diagram_csv,
    write_filtration_csv,
    write_json,
    write_trials,
)
from morselab.stats import aggregate


@pytest.fixture(scope="module")
def agg(circle_summaries, circle_params):
    return aggregate(circle_summaries, circle_params, {1: 1.0})


# ------------------------------------------------------------------
# Aggregate report
# ------------------------------------------------------------------

class TestEmitReport:
    def test_round_trip(self, agg, circle_summaries, tmp_path):
        path = emit_report(agg, circle_summaries, {"d": 1, "k": 1}, 11, tmp_path)
        assert path == tmp_path / REPORT_NAME
        assert load_stats(tmp_path) == agg
        report = load_report(path)
        assert report["master_seed"] == 11
        assert report["config"] == {"d": 1, "k": 1}
        assert report["dk"] == {"1": 1.0}

    def test_identical_inputs_identical_bytes(self, agg, circle_summaries, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        emit_report(agg, circle_summaries, {}, 11, a)
        emit_report(agg, circle_summaries, {}, 11, b)
        assert (a / REPORT_NAME).read_bytes() == (b / REPORT_NAME).read_bytes()
        assert (a / "trials.csv").read_bytes() == (b / "trials.csv").read_bytes()

    def test_curve_files(self, agg, circle_summaries, tmp_path):
        emit_report(agg, circle_summaries, {}, 11, tmp_path)
        names = sorted(p.name for p in tmp_path.glob("*.csv") if p.name != "trials.csv")
        assert names == sorted([
            "betti_0.csv", "betti_1.csv", "f_mean_1.csv", "f_exact_1.csv",
            "prob_h_1.csv", "prob_h_limit_1.csv", "prob_inst_1.csv",
        ])
        betti = np.loadtxt(tmp_path / "betti_0.csv", delimiter=",")
        assert betti.shape == (20, 2)
        np.testing.assert_allclose(betti[:, 0], agg.curves["r_grid"])

    def test_missing_directory(self, agg, circle_summaries, tmp_path):
        with pytest.raises(ReportIOError):
            emit_report(agg, circle_summaries, {}, 11, tmp_path / "absent")

    def test_missing_report(self, tmp_path):
        with pytest.raises(ReportIOError):
            load_report(tmp_path)


class TestTrialTables:
    def test_record_columns(self, circle_summaries):
        rec = trial_record(circle_summaries[0])
        assert rec["seed"] == "11:0:0"
        assert rec["t_iso_0"] is None
        assert {"f_0", "f_1", "f_pos_1", "f_neg_1", "f_of_1", "t_1", "pairing_fraction_0"} <= set(rec)

    def test_csv_and_parquet_agree(self, circle_summaries, tmp_path):
        csv_path, parquet_path = write_trials(circle_summaries, tmp_path)
        from_csv = pacsv.read_csv(csv_path)
        from_parquet = pq.read_table(parquet_path)
        assert from_csv.num_rows == from_parquet.num_rows == len(circle_summaries)
        assert from_parquet.column("trial").to_pylist() == list(range(len(circle_summaries)))
        assert from_csv.column("f_1").to_pylist() == [s.f_at_r[1] for s in circle_summaries]

    def test_missing_directory(self, circle_summaries, tmp_path):
        with pytest.raises(ReportIOError):
            write_trials(circle_summaries, tmp_path / "absent")


def test_curve_sorted_by_abscissa(tmp_path):
    path = write_curve(tmp_path / "c.csv", [0.3, 0.1, 0.2], [3.0, 1.0, 2.0], "r", "y")
    assert path.read_text().splitlines()[0] == "# r,y"
    data = np.loadtxt(path, delimiter=",")
    np.testing.assert_array_equal(data[:, 0], [0.1, 0.2, 0.3])
    np.testing.assert_array_equal(data[:, 1], [1.0, 2.0, 3.0])


def test_write_json(tmp_path):
    path = write_json({"b": 1, "a": [1, 2]}, tmp_path / "x.json")
    assert json.loads(path.read_text()) == {"a": [1, 2], "b": 1}
    with pytest.raises(ReportIOError):
        write_json({}, tmp_path / "absent" / "x.json")


# ------------------------------------------------------------------
# Single-trial tables
# ------------------------------------------------------------------

class TestSingleTrialTables:
    def test_filtration(self, covered_circle, tmp_path):
        filt = covered_circle.filtration
        table = pacsv.read_csv(write_filtration_csv(filt, tmp_path / "f.csv"))
        top = int(filt.dims.max())
        assert top >= 1
        assert table.column_names == ["dim", "value"] + [f"v{j}" for j in range(top + 1)]
        assert table.num_rows == len(filt)
        values = table.column("value").to_pylist()
        assert values == sorted(values)
        assert table.column("v0").null_count == 0
        assert table.column("v1").null_count == int(np.sum(filt.dims == 0))
        last = len(filt) - 1
        row = tuple(table.column(f"v{j}")[last].as_py() for j in range(filt.dims[last] + 1))
        assert row == filt[last].vertices

    def test_critical_faces(self, covered_square, tmp_path):
        path = write_critical_csv(covered_square.criticals, 2, tmp_path / "crit.csv")
        table = pacsv.read_csv(path)
        assert table.column_names == ["dim", "rho", "phi", "sign", "nearest_facet_rho", "c0", "c1"]
        assert table.num_rows == len(covered_square.criticals)
        assert set(table.column("sign").to_pylist()) == {"positive", "negative"}

    def test_diagram(self, covered_circle, tmp_path):
        path = write_diagram_csv(covered_circle.persistence, tmp_path / "dgm.csv")
        lines = path.read_text().splitlines()
        assert lines[0].replace('"', "") == "k,birth,death"
        assert len(lines) - 1 == len(covered_circle.persistence.diagram())
        assert sum("inf" in line.lower() for line in lines[1:]) == 2
