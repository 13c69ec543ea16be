"""Shared pytest fixtures for level-set testing."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from hybrid_levelset.density import Bandwidth
from hybrid_levelset.density import KdeModel
from hybrid_levelset.geometry import PointCloud
from hybrid_levelset.synthref import get_density


@pytest.fixture(autouse=True)
def no_levelset_threads(monkeypatch):
    """Run every test single-threaded unless it sets LEVELSET_THREADS itself."""
    monkeypatch.delenv("LEVELSET_THREADS", raising=False)


@pytest.fixture
def unit_square_corners() -> PointCloud:
    """Corners of the unit square."""
    return PointCloud([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


@pytest.fixture
def square_corners() -> PointCloud:
    """Corners (+-1, +-1) of the square of side 2 centered at the origin."""
    return PointCloud([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def gaussian_cloud(rng) -> PointCloud:
    """200 standard normal points."""
    return PointCloud(rng.standard_normal((200, 2)))


@pytest.fixture
def gaussian_model(gaussian_cloud) -> KdeModel:
    """Fixed-bandwidth model on the Gaussian cloud (no LSCV search)."""
    return KdeModel(gaussian_cloud, Bandwidth(0.4, 0.4))


@pytest.fixture
def two_blob_csv(tmp_path) -> Path:
    """CSV of two well separated Gaussian blobs with a header row."""
    generator = np.random.default_rng(7)
    left = generator.normal([-2.0, 0.0], 0.3, size=(60, 2))
    right = generator.normal([2.0, 0.0], 0.3, size=(60, 2))
    path = tmp_path / "blobs.csv"
    lines = ["x,y"] + [f"{x:.6f},{y:.6f}" for x, y in np.vstack([left, right])]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def quiet_logging():
    """Silence INFO logging for noisy end-to-end runs."""
    previous = logging.getLogger().level
    logging.getLogger().setLevel(logging.WARNING)
    yield
    logging.getLogger().setLevel(previous)


@pytest.fixture
def cli_runner(monkeypatch) -> CliRunner:
    """Click runner whose commands log through pytest instead of a stdout handler."""
    monkeypatch.setattr(sys.modules["hybrid_levelset.main"], "setup_logging", lambda: None)
    return CliRunner()


@pytest.fixture
def disc_sample_csv(tmp_path) -> Path:
    """300 points drawn uniformly from the two-discs reference shape, without a header."""
    sample = get_density("two-discs").sample(300, np.random.default_rng(21))
    path = tmp_path / "discs.csv"
    path.write_text("".join(f"{x:.6f},{y:.6f}\n" for x, y in sample.points))
    return path
