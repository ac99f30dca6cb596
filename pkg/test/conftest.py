"""
Shared pytest configuration and fixtures for the wow_flow test suite.

Clouds are small and seeded so every test is deterministic and runs in well under a second
unless it is marked ``slow``.
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from config import WowConfig
from config.run_config import RunConfig
from data.container import CloudDataset
from data.generators import gen_circle_cloud
from wow_flow.measures import PointCloud
from wow_flow.net import NetConfig, init_net


@pytest.fixture
def temp_dir():
    """Create a temporary directory for testing."""
    with tempfile.TemporaryDirectory() as temp_dir:
        yield Path(temp_dir)


@pytest.fixture
def wow_config(temp_dir):
    """Configuration rooted in a throwaway home directory."""
    cfg = WowConfig(base_dir=temp_dir / "home")
    cfg.run = RunConfig()
    return cfg.ensure_directories()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_clouds(rng):
    """Four seeded 2 x 6 clouds."""
    return [PointCloud(rng.standard_normal((2, 6))) for _ in range(4)]


@pytest.fixture
def tiny_net_config():
    """A network small enough for finite-difference gradient checks."""
    return NetConfig(dim=2, k_local=2, mlp_layers=1, hidden_width=4, attn_heads=1, attn_dim=4, time_embed_dim=4)


@pytest.fixture
def tiny_net(tiny_net_config):
    return init_net(tiny_net_config, seed=7, zero_output=False)


@pytest.fixture
def circle_dataset():
    """Eight target circles of 12 points, as the circles experiment draws them."""
    clouds = [gen_circle_cloud((h, 10.0), 2.0, 12, seed=index) for index, h in enumerate(np.linspace(-20, 20, 8))]
    return CloudDataset.of(clouds)


@pytest.fixture
def dataset_file(temp_dir, circle_dataset):
    from data.container import write_dataset

    return write_dataset(temp_dir / "circles.wowds", circle_dataset)
