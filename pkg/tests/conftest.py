import pytest

from ringacc.config import ExperimentConfig


def desk_config(**overrides) -> ExperimentConfig:
    """Small integer-mode experiment that runs in well under a second."""
    base = dict(n_k=2, n_w=2, world_size=4, subring_size=2, lanes=1,
                measurements=2, seed=11, value_mode="integer",
                transport="inprocess", timeout_s=10.0)
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture
def make_config():
    return desk_config
