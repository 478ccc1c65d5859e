"""Tests for configuration loading and validation."""

from __future__ import annotations

import json

import pytest

from morselab.config import (
    ENV_WORKERS,
    Config,
    ExperimentConfig,
    load_config,
    resolve_workers,
)
from morselab.errors import ConfigError, RadiusExceedsRmax

TOML = """\
[general]
db_path = "{tmp}/lab.db"
output_dir = "{tmp}/out"
workers = 3

[experiment]
d = 3
k = 2
n = 5000
lambda = 1.5
trials = 40
lambda_grid = [0.0, 1.0]
unknown_key = "ignored"

[limits]
dk_samples = 5000
"""


class TestLoadConfig:
    def test_toml(self, tmp_path):
        path = tmp_path / "config.toml"
        path.write_text(TOML.format(tmp=tmp_path))
        cfg = load_config(str(path))
        assert cfg.general.workers == 3
        assert cfg.general.db_path == str((tmp_path / "lab.db").resolve())
        assert (cfg.experiment.d, cfg.experiment.k, cfg.experiment.trials) == (3, 2, 40)
        assert cfg.experiment.lam == 1.5
        assert cfg.experiment.lambda_grid == [0.0, 1.0]
        assert cfg.limits.dk_samples == 5000
        assert cfg.limits.bp_samples == 1_000_000

    def test_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"experiment": {"d": 1, "k": 1, "r": 0.05}}))
        cfg = load_config(str(path))
        assert cfg.experiment.r == 0.05
        assert cfg.experiment.radius() == 0.05

    def test_missing_file_gives_defaults(self, tmp_path):
        cfg = load_config(str(tmp_path / "absent.toml"))
        assert cfg.experiment == ExperimentConfig()

    def test_env_var_path(self, tmp_path, monkeypatch):
        path = tmp_path / "env.toml"
        path.write_text("[experiment]\ntrials = 7\n")
        monkeypatch.setenv("MORSELAB_CONFIG", str(path))
        assert load_config().experiment.trials == 7

    def test_malformed_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[experiment\nd = ")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_as_dict(self):
        data = Config().as_dict()
        assert set(data) == {"general", "experiment", "limits"}
        assert data["experiment"]["lam"] == 0.0


class TestValidate:
    def test_defaults_are_valid(self):
        ExperimentConfig().validate()

    @pytest.mark.parametrize("field,value", [
        ("trials", 0),
        ("d", 5),
        ("k", 3),
        ("n", 1.0),
        ("r_max", 0.3),
        ("r_grid_points", 1),
        ("process_intervals", 0),
        ("max_attempts", 0),
    ])
    def test_rejects(self, field, value):
        exp = ExperimentConfig(d=2, k=1)
        setattr(exp, field, value)
        with pytest.raises(ConfigError):
            exp.validate()

    def test_radius_above_cap(self):
        with pytest.raises(RadiusExceedsRmax):
            ExperimentConfig(d=2, k=1, r=0.2).validate()
        with pytest.raises(RadiusExceedsRmax):
            ExperimentConfig(d=2, k=2, n=10.0, lam=6.0).validate()

    def test_needs_lambda_or_radius(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(lam=None, r=None).radius()

    def test_radius_uses_threshold_degree(self):
        # H_1 on T^2 is tied to the coverage threshold.
        a = ExperimentConfig(d=2, k=1, n=2000.0, lam=0.5).radius()
        b = ExperimentConfig(d=2, k=2, n=2000.0, lam=0.5).radius()
        assert a == b


class TestWorkers:
    def test_cli_value_wins(self, monkeypatch):
        monkeypatch.setenv(ENV_WORKERS, "4")
        assert resolve_workers(2, Config()) == 2

    def test_env_then_config(self, monkeypatch):
        monkeypatch.setenv(ENV_WORKERS, "4")
        assert resolve_workers(None, Config()) == 4
        monkeypatch.delenv(ENV_WORKERS)
        assert resolve_workers(None, Config()) == 1

    def test_invalid(self, monkeypatch):
        with pytest.raises(ConfigError):
            resolve_workers(0, Config())
        monkeypatch.setenv(ENV_WORKERS, "many")
        with pytest.raises(ConfigError):
            resolve_workers(None, Config())
