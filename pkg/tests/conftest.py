import numpy as np
import pytest

from squim import train as te
from squim.model import ModelConfig


@pytest.fixture(scope="session")
def desk_cfg():
    return ModelConfig.desk()


@pytest.fixture(scope="session")
def small_ds():
    """Four labelled 1 s mixtures, shared read-only across tests."""
    return te.synth_dataset(4, 1.0, seed=3)


def fake_pesq(snr_db):
    # a smooth monotone stand-in for an external PESQ tool
    return float(1.0 + 3.64 / (1.0 + np.exp(-(snr_db - 5.0) / 8.0)))


@pytest.fixture(scope="session")
def pesq_ds(small_ds):
    return te.with_pesq(small_ds, {s.id: fake_pesq(s.snr_db) for s in small_ds})
