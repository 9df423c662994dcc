import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from projnet import (Splits, batchnorm, conv2d, dense, flatten, init_network,
                     relu)
from projnet.data import synthetic_splits


def tiny_layers(in_channels=1, classes=4):
    """3-conv + 1-dense net over 8x8 inputs used throughout the tests."""
    return [
        conv2d(3, 3, in_channels, 8, stride=1, padding=1), batchnorm(8), relu(),
        conv2d(3, 3, 8, 8, stride=2, padding=1), batchnorm(8), relu(),
        conv2d(3, 3, 8, 16, stride=2, padding=1), batchnorm(16), relu(),
        flatten(),
        dense(16 * 2 * 2, classes),
    ]


@pytest.fixture
def tiny_net():
    return init_network((1, 8, 8), tiny_layers(), seed=7)


@pytest.fixture
def tiny_data() -> Splits:
    return synthetic_splits("blobs", n_train=200, n_test=100, classes=4,
                            seed=3, noise=0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
