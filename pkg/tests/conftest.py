from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from reldec import (
    ParityCheckMatrix,
    TannerGraph,
    build_ab_code,
    make_clusters,
)

settings.register_profile(
    "ci",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def ab35():
    return build_ab_code(3, 5)


@pytest.fixture(scope="session")
def ab35_graph(ab35):
    return TannerGraph.from_matrix(ab35)


@pytest.fixture(scope="session")
def ab35_clustering(ab35_graph):
    return make_clusters(ab35_graph, 1)


@pytest.fixture()
def two_check_code():
    """H = [[1,1,0],[0,1,1]]: the smallest graph with a shared variable."""
    return ParityCheckMatrix.from_dense(np.array([[1, 1, 0], [0, 1, 1]]))


def random_code(rng: np.random.Generator, m: int, n: int) -> ParityCheckMatrix:
    """Random sparse binary matrix with full row/column coverage."""
    while True:
        dense = (rng.random((m, n)) < 0.4).astype(np.uint8)
        # guarantee coverage without changing sparsity much
        for r in range(m):
            if not dense[r].any():
                dense[r, rng.integers(n)] = 1
        for c in range(n):
            if not dense[:, c].any():
                dense[rng.integers(m), c] = 1
        if dense.sum(axis=1).min() >= 1 and dense.sum(axis=0).min() >= 1:
            return ParityCheckMatrix.from_dense(dense)
