import numpy as np
import pytest

from jamgame.builtins import identity_flip, swapped_pairs, three_state, two_bsc
from jamgame.channels import ChannelFamily


def random_family(rng, states, inputs=2, outputs=2, concentration=1.0):
    mats = [rng.dirichlet(np.full(outputs, concentration), size=inputs) for _ in range(states)]
    return ChannelFamily.from_matrices(mats)


@pytest.fixture
def idflip():
    return identity_flip()


@pytest.fixture
def swapped():
    return swapped_pairs()


@pytest.fixture(scope="session")
def three():
    return three_state()


@pytest.fixture
def bscs():
    return two_bsc(0.1, 0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
