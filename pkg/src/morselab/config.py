"""Load and validate experiment configuration."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 12):
    import tomllib
else:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib  # type: ignore[no-redef]

from morselab.errors import ConfigError, RadiusExceedsRmax
from morselab.geometry import R_MAX
from morselab.limits import radius_for_lambda, threshold_degree

_DEFAULT_CONFIG_PATH = "~/.config/torus-morse-lab/config.toml"
_ENV_CONFIG = "MORSELAB_CONFIG"
ENV_WORKERS = "TML_WORKERS"


@dataclass
class GeneralConfig:
    db_path: str = "~/.config/torus-morse-lab/morselab.db"
    output_dir: str = "./reports"
    workers: int = 1


@dataclass
class ExperimentConfig:
    d: int = 2
    k: int = 1
    n: float = 2000.0
    lam: float | None = 0.0
    r: float | None = None
    trials: int = 100
    master_seed: int = 0
    r_grid_points: int = 200
    lambda_grid: list[float] = field(default_factory=lambda: [-1.0, 0.0, 1.0, 2.0])
    r_max: float = R_MAX
    lambda_cap: float = 6.0
    max_rejection_rate: float = 1e-3
    process_t0: float = 2.0
    process_intervals: int = 4
    max_attempts: int = 20

    def radius(self) -> float:
        """The configured radius: explicit r, else the radius of λ at the threshold of H_k."""
        if self.r is not None:
            if self.r > self.r_max:
                raise RadiusExceedsRmax(f"r={self.r} exceeds r_max={self.r_max}")
            return float(self.r)
        if self.lam is None:
            raise ConfigError("either experiment.lambda or experiment.r must be set")
        return radius_for_lambda(self.n, self.d, threshold_degree(self.k, self.d), self.lam,
                                 r_max=self.r_max)

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not 1 <= self.d <= 4:
            raise ConfigError(f"d must be in [1, 4], got {self.d}")
        if not 1 <= self.k <= self.d:
            raise ConfigError(f"k must be in [1, d={self.d}], got {self.k}")
        if self.n <= 1:
            raise ConfigError(f"n must exceed 1, got {self.n}")
        if not 0 < self.r_max < 0.25:
            raise ConfigError(f"r_max must lie in (0, 0.25), got {self.r_max}")
        if self.r_grid_points < 2:
            raise ConfigError("r_grid_points must be >= 2")
        if self.process_intervals < 1 or self.process_t0 <= 0:
            raise ConfigError("process_intervals must be >= 1 and process_t0 > 0")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        self.radius()


@dataclass
class LimitsConfig:
    dk_samples: int = 1_000_000
    dk_seed: int = 0
    bp_samples: int = 1_000_000
    bp_radius: float = 0.05
    sphere_t0: float = 0.5


@dataclass
class Config:
    general: GeneralConfig = field(default_factory=GeneralConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    limits: LimitsConfig = field(default_factory=LimitsConfig)

    def as_dict(self) -> dict:
        return asdict(self)


def _expand(path: str) -> str:
    return str(Path(os.path.expanduser(path)).resolve())


def _section(raw: dict, cls: type, section: str):
    data = dict(raw.get(section, {}))
    if "lambda" in data:
        data["lam"] = data.pop("lambda")
    return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


def _read(resolved: Path) -> dict:
    try:
        if resolved.suffix == ".json":
            return json.loads(resolved.read_text(encoding="utf-8"))
        with open(resolved, "rb") as fh:
            return tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{resolved}: {exc}") from exc


def load_config(path: str | None = None) -> Config:
    """Load config from *path*, env var, or default location."""
    if path is None:
        path = os.environ.get(_ENV_CONFIG, _DEFAULT_CONFIG_PATH)
    resolved = Path(os.path.expanduser(path))

    raw = _read(resolved) if resolved.exists() else {}

    try:
        cfg = Config(
            general=_section(raw, GeneralConfig, "general"),
            experiment=_section(raw, ExperimentConfig, "experiment"),
            limits=_section(raw, LimitsConfig, "limits"),
        )
    except TypeError as exc:
        raise ConfigError(f"{resolved}: {exc}") from exc
    cfg.general.db_path = _expand(cfg.general.db_path)
    cfg.general.output_dir = _expand(cfg.general.output_dir)
    return cfg


def resolve_workers(cli_value: int | None, cfg: Config) -> int:
    """--workers, then TML_WORKERS, then general.workers."""
    if cli_value is not None:
        workers = cli_value
    elif os.environ.get(ENV_WORKERS):
        try:
            workers = int(os.environ[ENV_WORKERS])
        except ValueError as exc:
            raise ConfigError(f"{ENV_WORKERS} must be an integer") from exc
    else:
        workers = cfg.general.workers
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    return workers
