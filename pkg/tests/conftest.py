import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_shards():
    """Five IID shards of a small 3-class problem plus its test split."""
    from resfed.data import make_blobs, partition_iid

    train, test = make_blobs(600, 6, 3, 0.4, seed=3).split(0.2)
    return partition_iid(train, 5, seed=3), test
