"""Shared test fixtures."""

from __future__ import annotations

import numpy as np
import pytest
import pytest_asyncio

from morselab.cech import build_filtration
from morselab.config import Config, ExperimentConfig, GeneralConfig, LimitsConfig
from morselab.morse import assign_signs, detect_critical_faces
from morselab.persistence import reduce_persistence
from morselab.sampler import from_points
from morselab.store import init_store
from morselab.trial import TrialParams, run_trial


@pytest_asyncio.fixture
async def store(tmp_path):
    """Temp result store for tests."""
    db_path = str(tmp_path / "test_morselab.db")
    conn = await init_store(db_path)
    yield conn
    await conn.close()


@pytest.fixture
def cfg(tmp_path):
    """Small, fast experiment with temp paths."""
    return Config(
        general=GeneralConfig(
            db_path=str(tmp_path / "test.db"),
            output_dir=str(tmp_path / "reports"),
            workers=1,
        ),
        experiment=ExperimentConfig(
            d=1, k=1, n=80.0, lam=0.0, trials=6, master_seed=11,
            r_grid_points=20, lambda_grid=[-1.0, 0.0, 1.0],
        ),
        limits=LimitsConfig(dk_samples=20_000, bp_samples=20_000),
    )


def jittered_lattice(m: int, d: int, jitter: float, seed: int) -> np.ndarray:
    """Cell centers of an m^d lattice, each moved by up to jitter/m per axis."""
    rng = np.random.default_rng(seed)
    axes = np.meshgrid(*[np.arange(m)] * d, indexing="ij")
    cells = np.stack([a.ravel() for a in axes], axis=1).astype(float)
    pts = (cells + 0.5 + rng.uniform(-jitter, jitter, size=cells.shape)) / m
    return np.mod(pts, 1.0)


class Pipeline:
    """Cloud, filtration, persistence and signed critical faces of one point set."""

    def __init__(self, points, r_max: float = 0.125) -> None:
        self.cloud = from_points(points, r_max=r_max)
        self.filtration = build_filtration(self.cloud, r_max=r_max)
        self.persistence = reduce_persistence(self.filtration)
        self.criticals = assign_signs(
            detect_critical_faces(self.filtration, self.cloud), self.persistence
        )
        self.d = self.cloud.d


@pytest.fixture(scope="session")
def covered_square():
    """64 points on T^2 whose 0.125-balls cover the torus."""
    return Pipeline(jittered_lattice(8, 2, 0.1, seed=3))


@pytest.fixture(scope="session")
def covered_circle():
    """20 points on T^1 with gaps well below 0.25."""
    return Pipeline(jittered_lattice(20, 1, 0.2, seed=5))


@pytest.fixture(scope="session")
def random_square():
    """A sparse random cloud on T^2 that is not covered at 0.125."""
    rng = np.random.default_rng(17)
    return Pipeline(rng.random((25, 2)))


@pytest.fixture(scope="session")
def circle_params():
    """Trial parameters of the small circle experiment used by ``cfg``."""
    return TrialParams.build(n=80.0, d=1, k=1, lam=0.0, r_grid_points=20,
                             lambda_grid=(-1.0, 0.0, 1.0))


@pytest.fixture(scope="session")
def circle_summaries(circle_params):
    return [run_trial(circle_params, 11, t)[0] for t in range(6)]
