"""Hard-negative selection and false-negative identification.

For each anchor the hard negative is the second most similar centroid:
close enough to carry gradient signal but guaranteed to sit in a different
cluster. Batch members sharing the anchor's cluster are flagged as false
negatives so the losses can treat them separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import CentroidSet, ClusterAssignment
from .embedding import EmbeddingBatch
from .errors import InsufficientClustersError, ShapeError

ANNOTATION_MODES = ("standard", "harder", "random")


@dataclass
class NegativeAnnotation:
    """Per-anchor negative bookkeeping for one batch.

    ``hard_negatives`` holds copied centroid rows: later centroid updates
    cannot leak into a loss computed from this annotation. In the default
    mode ``hard_negative_index[i] != nearest_centroid_index[i]``; the
    ``harder`` ablation deliberately picks the nearest centroid itself.
    """

    nearest_centroid_index: np.ndarray
    hard_negative_index: np.ndarray
    hard_negatives: np.ndarray
    false_negative_mask: np.ndarray

    @property
    def n(self) -> int:
        return self.nearest_centroid_index.shape[0]


def annotate(
    batch: EmbeddingBatch,
    centroids: CentroidSet,
    assignment: ClusterAssignment,
    mode: str = "standard",
    seed: int = 0,
) -> NegativeAnnotation:
    """Select hard negatives and mark same-cluster pairs as false negatives.

    mode:
      standard -- second most similar centroid (ties to lowest index)
      harder   -- the most similar centroid itself
      random   -- a seeded uniform centroid other than the nearest
    """
    if mode not in ANNOTATION_MODES:
        raise ValueError(f"unknown annotation mode {mode!r}")
    k = centroids.k
    if k < 2:
        raise InsufficientClustersError(f"need at least 2 centroids, got {k}")
    if assignment.n != batch.n:
        raise ShapeError(
            f"assignment covers {assignment.n} samples, batch has {batch.n}"
        )
    sims = batch.anchors @ centroids.centroids.T
    nearest = np.argmax(sims, axis=1)
    n = batch.n

    if mode == "harder":
        hard_idx = nearest.copy()
    elif mode == "random":
        rng = np.random.default_rng(seed)
        draw = rng.integers(0, k - 1, size=n)
        hard_idx = draw + (draw >= nearest)  # skip over the nearest index
    else:
        masked = sims.copy()
        masked[np.arange(n), nearest] = -np.inf
        hard_idx = np.argmax(masked, axis=1)

    assigned = assignment.assigned_cluster
    mask = assigned[:, None] == assigned[None, :]
    np.fill_diagonal(mask, False)

    return NegativeAnnotation(
        nearest_centroid_index=nearest,
        hard_negative_index=hard_idx,
        hard_negatives=centroids.centroids[hard_idx].copy(),
        false_negative_mask=mask,
    )


def false_negative_precision(mask: np.ndarray, ground_truth_labels) -> float:
    """Fraction of mask-true pairs whose samples share a ground-truth label.

    An empty mask has vacuous precision 1.0.
    """
    labels = np.asarray(ground_truth_labels)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (labels.shape[0], labels.shape[0]):
        raise ShapeError(
            f"mask shape {mask.shape} does not match {labels.shape[0]} labels"
        )
    total = int(mask.sum())
    if total == 0:
        return 1.0
    agree = labels[:, None] == labels[None, :]
    return int((mask & agree).sum()) / total
