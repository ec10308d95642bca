import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fuzzyseg.imagecore import GrayImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def constant_image():
    return GrayImage(np.full((20, 20), 0.5))


@pytest.fixture
def random_image(rng):
    return GrayImage(rng.uniform(0.0, 1.0, size=(12, 10)))


class StubModel:
    """Affinity model stub: explicit quantized edge fields per object."""

    def __init__(self, fields):
        self.fields = fields

    def edge_fields(self, m):
        return self.fields[m]


@pytest.fixture
def stub_model_cls():
    return StubModel
