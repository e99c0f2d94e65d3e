import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from knn_loocv import Dataset, TieRule  # noqa: E402

INDEX_ORDER = TieRule(mode="index-order")


@pytest.fixture
def three_points():
    return Dataset([0.0, 1.0, 3.0], [0.0, 1.0, 5.0])


def random_dataset(rng, n, d):
    return Dataset(rng.random((n, d)), rng.standard_normal(n))
