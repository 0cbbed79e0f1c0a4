import os
from pathlib import Path

import numpy as np
import pytest

from cohrcf import data

ROOT = Path(__file__).resolve().parents[1]


def movielens_path():
    """``COHRCF_ML100K`` if set, else ``data/ml-100k/u.data`` in the checkout."""
    env = os.environ.get("COHRCF_ML100K")
    return Path(env) if env else ROOT / "data" / "ml-100k" / "u.data"


@pytest.fixture(scope="session")
def ml100k():
    path = movielens_path()
    if not path.exists():
        pytest.skip(f"MovieLens 100K not found at {path} (set COHRCF_ML100K)")
    return data.load_movielens(path)


def matrix_from_dense(grid):
    grid = np.asarray(grid)
    u, i = np.nonzero(grid)
    return data.RatingMatrix(grid.shape[0], grid.shape[1], u, i, grid[u, i])


@pytest.fixture
def toy_matrix():
    """6 users x 4 items: two taste groups for training, two test users."""
    return matrix_from_dense(
        [
            [5, 4, 0, 1],
            [4, 5, 1, 0],
            [1, 0, 5, 4],
            [0, 1, 4, 5],
            [5, 5, 2, 0],
            [0, 2, 5, 4],
        ]
    )
