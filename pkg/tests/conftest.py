import numpy as np
import pytest

from egno.nbody import SimConfig, generate_dataset


@pytest.fixture(scope="session")
def tiny_splits():
    """Small but real dataset shared by harness-level tests."""
    sim = SimConfig(n_particles=5, frames=11, seed=0)
    return generate_dataset(sim, {"train": 40, "valid": 16, "test": 16},
                            window=10, p=5, master_seed=123)
