"""Test configuration and fixtures."""

from typing import Any

import numpy as np
import pytest

from mcf_nav.config import RunConfig
from mcf_nav.gaussfuse import DiagGaussian2
from mcf_nav.neural import Mlp
from mcf_nav.sim import WorldSpec, arena_by_name


def tiny_config(**train: Any) -> RunConfig:
    """A run small enough for unit tests: a few hundred steps on the open arena."""
    train_section: dict[str, Any] = {
        "modes": ["mcf"],
        "total_steps": 600,
        "eval_every_episodes": 1,
        "eval_episodes": 2,
        "seeds": [0],
        "arenas": ["open"],
        "demo_episodes": 2,
        "heatmap_episodes": 2,
        "snapshot_every": 50,
    }
    train_section.update(train)
    return RunConfig.model_validate(
        {
            "train": train_section,
            "sac": {
                "hidden_sizes": [16, 16],
                "batch_size": 32,
                "buffer_capacity": 5000,
                "update_after": 64,
            },
            "eval": {"episodes": 2, "train_arenas": ["open"], "unseen_arenas": ["unseen"]},
        }
    )


@pytest.fixture()
def small_config() -> RunConfig:
    return tiny_config()


@pytest.fixture()
def open_world() -> WorldSpec:
    return arena_by_name("open")


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def constant_actor(v_mean: float, w_mean: float = 0.0, log_std: float = 0.0) -> Mlp:
    """A gaussian-head actor whose output ignores the observation."""
    actor = Mlp([19, 8, 4], head="gaussian", rng=np.random.default_rng(0))
    for p in actor.params:
        p[...] = 0.0
    actor.params[-1][:] = [np.arctanh(v_mean), np.arctanh(w_mean), log_std, log_std]
    return actor


def gaussian(mv: float, vv: float, mw: float, vw: float) -> DiagGaussian2:
    return DiagGaussian2.from_arrays([mv, mw], [vv, vw])
