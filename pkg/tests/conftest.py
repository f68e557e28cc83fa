from pathlib import Path

import numpy as np
import pytest
import torch
from omegaconf import OmegaConf

from pairlat.world.generator import build_generator

WORLD_DIR = Path(__file__).parents[1] / "pairlat" / "configs" / "world"


def world_config(name: str):
    return OmegaConf.load(WORLD_DIR / f"{name}.yaml")


@pytest.fixture(scope="session")
def fig2():
    return build_generator(world_config("fig2"), seed=0)


@pytest.fixture(scope="session")
def fig2_dropedge():
    return build_generator(world_config("fig2_dropedge"), seed=0)


@pytest.fixture(scope="session")
def chain5():
    return build_generator(world_config("chain5"), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(autouse=True)
def _float64():
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)
