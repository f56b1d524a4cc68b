"""Dense vector and batch primitives.

Everything downstream (clustering, negative selection, losses, metrics)
compares directions only, so vectors are normalized once at the boundary
and similarities are plain dot products of unit vectors from then on.
All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BatchTooSmallError, NormalizationError, ShapeError

UNIT_NORM_TOL = 1e-9


def normalize(v: np.ndarray) -> np.ndarray:
    """Return ``v`` scaled to unit L2 norm.

    Raises NormalizationError for zero or non-finite norms.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise NormalizationError(f"cannot normalize vector with norm {norm}")
    return v / norm


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise :func:`normalize` for a 2-D array."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got ndim={m.ndim}")
    norms = np.linalg.norm(m, axis=1)
    if not np.all(np.isfinite(norms)) or np.any(norms == 0.0):
        bad = int(np.argmin(np.where(np.isfinite(norms), norms, -1.0)))
        raise NormalizationError(f"row {bad} has norm {norms[bad]}")
    return m / norms[:, None]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, computed as the dot product of normalized inputs."""
    a = normalize(a)
    b = normalize(b)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(a @ b)


def pairwise_similarity(batch_a, batch_b) -> np.ndarray:
    """Matrix of cosines: entry (i, j) is cosine(batch_a[i], batch_b[j])."""
    try:
        a = np.atleast_2d(np.asarray(batch_a, dtype=np.float64))
        b = np.atleast_2d(np.asarray(batch_b, dtype=np.float64))
    except ValueError:  # ragged input: vectors of differing lengths
        raise ShapeError("vectors in a batch must share one dimension") from None
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return normalize_rows(a) @ normalize_rows(b).T


@dataclass
class EmbeddingBatch:
    """N anchor/positive pairs, row-normalized on construction.

    ``anchors[i]`` and ``positives[i]`` are two views of the same sample.
    """

    anchors: np.ndarray
    positives: np.ndarray

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=np.float64)
        positives = np.asarray(self.positives, dtype=np.float64)
        if anchors.ndim != 2 or positives.ndim != 2:
            raise ShapeError("anchors and positives must be 2-D arrays")
        if anchors.shape != positives.shape:
            raise ShapeError(
                f"anchor/positive shape mismatch: {anchors.shape} vs {positives.shape}"
            )
        if anchors.shape[0] < 2:
            raise BatchTooSmallError(
                f"a batch needs at least 2 samples, got {anchors.shape[0]}"
            )
        if anchors.shape[1] < 2:
            raise ShapeError(f"embedding dimension must be >= 2, got {anchors.shape[1]}")
        self.anchors = normalize_rows(anchors)
        self.positives = normalize_rows(positives)

    @property
    def n(self) -> int:
        return self.anchors.shape[0]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]


def mean_offdiagonal_similarity(batch: EmbeddingBatch) -> float:
    """Mean cosine over all ordered anchor pairs (i, j), i != j."""
    sims = batch.anchors @ batch.anchors.T
    n = batch.n
    return float((sims.sum() - np.trace(sims)) / (n * (n - 1)))
