import numpy as np
import pytest

from ternrom.arch.config import HardwareConfig
from ternrom.model import make_toy_model


@pytest.fixture(scope="session")
def hw():
    return HardwareConfig()


@pytest.fixture(scope="session")
def toy():
    return make_toy_model(seed=0)


@pytest.fixture(scope="session")
def small_toy():
    """Two-layer toy model with grouped KV heads, small enough for per-token oracles."""
    return make_toy_model(seed=5, num_layers=2, hidden_dim=64, ffn_dim=96, num_heads=4, num_kv_heads=2,
                          vocab_size=64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
