import numpy as np
import pytest

from clusterns.clustering import CentroidSet, assign
from clusterns.embedding import EmbeddingBatch, normalize_rows
from clusterns.negatives import annotate


def random_batch(seed, n=8, d=4):
    rng = np.random.default_rng(seed)
    return EmbeddingBatch(rng.standard_normal((n, d)), rng.standard_normal((n, d)))


def random_centroids(seed, k, d):
    rng = np.random.default_rng(seed)
    return CentroidSet(normalize_rows(rng.standard_normal((k, d))))


def random_instance(seed, n=16, d=8, k=4):
    """A batch with a consistent assignment and annotation."""
    batch = random_batch(seed, n=n, d=d)
    centroids = random_centroids(seed + 10_000, k, d)
    assignment = assign(batch, centroids)
    annotation = annotate(batch, centroids, assignment)
    return batch, centroids, assignment, annotation


@pytest.fixture
def rng():
    return np.random.default_rng(0)
