"""
Shared fixtures for the BCMInfer test suite.
"""

import os
import sys

import numpy as np
import pytest

# Same layout as src/main.py: packages are imported from src/
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))

from cli.acceptance import fixture_trajectory  # noqa: E402
from models.opinion import InteractionEvent, ModelConfig, Outcome, Trajectory, Variant  # noqa: E402


@pytest.fixture(autouse=True)
def config_dir(tmp_path, monkeypatch):
    """Keep every test away from the user's configuration directory."""
    path = tmp_path / "config"
    monkeypatch.setenv("BCMINFER_CONFIG_DIR", str(path))
    monkeypatch.delenv("BCMINFER_LOG_LEVEL", raising=False)
    return path


@pytest.fixture
def bcmb_trajectory():
    return fixture_trajectory(Variant.BCMB)


def single_event_trajectory(x_u=0.6, x_v=0.45, outcome=Outcome(s_plus=True), **config_overrides):
    """Two agents, one observed interaction (0, 1) in step 0."""
    values = dict(variant=Variant.BCMB, n_agents=2, n_steps=1, interactions_per_step=1)
    values.update(config_overrides)
    return Trajectory(
        config=ModelConfig(**values),
        x0=np.array([x_u, x_v]),
        events=[InteractionEvent(0, (0, 1), outcome)],
    )
