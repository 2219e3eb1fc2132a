import numpy as np
import pytest

from foresight_dpl.numeric import Rng
from foresight_dpl.srnn import Params, init_params


def random_params(D: int, H: int, seed: int, scale: float = 1.0) -> Params:
    """Random network with non-trivial biases (init_params zeroes most of them)."""
    p = init_params(D, H, Rng(seed))
    rng = np.random.default_rng(seed)
    return p.map(lambda a: scale * (a + 0.3 * rng.standard_normal(a.shape)))


@pytest.fixture
def small_net():
    return random_params(3, 4, seed=11)
