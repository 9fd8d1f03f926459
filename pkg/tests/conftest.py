import numpy as np
import pytest
from scipy import sparse

from glimg.dataset import RatingMatrix, RatingRecord, build_matrix


def random_records(rng, num_users=10, num_items=8, density=0.5):
    records = []
    for u in range(num_users):
        for p in range(num_items):
            if rng.random() < density:
                records.append(RatingRecord(f"u{u}", f"i{p}", float(rng.integers(1, 6))))
    return records


def random_matrix(rng, num_users=10, num_items=8, density=0.5) -> RatingMatrix:
    """Random rating matrix where every user rates at least one item."""
    while True:
        records = random_records(rng, num_users, num_items, density)
        if not records:
            continue
        matrix = build_matrix(records)
        if matrix.num_users == num_users and matrix.num_items == num_items:
            return matrix


def dense(matrix: RatingMatrix) -> np.ndarray:
    return np.asarray(matrix.matrix.todense())


@pytest.fixture
def rng():
    return np.random.default_rng(42)
