"""Embedding-quality metrics: rank correlation, alignment/uniformity,
and clustering agreement (AMI, Hungarian-mapped accuracy)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import spearmanr
from sklearn.metrics import adjusted_mutual_info_score

from .embedding import normalize_rows
from .errors import DegenerateRankError, EmptyInputError, ShapeError


@dataclass
class ScoredPairSet:
    """Embedding pairs with human gold similarity scores."""

    embeddings_a: np.ndarray
    embeddings_b: np.ndarray
    gold_scores: np.ndarray

    def __post_init__(self):
        self.embeddings_a = np.asarray(self.embeddings_a, dtype=np.float64)
        self.embeddings_b = np.asarray(self.embeddings_b, dtype=np.float64)
        self.gold_scores = np.asarray(self.gold_scores, dtype=np.float64)
        if self.embeddings_a.shape != self.embeddings_b.shape:
            raise ShapeError("pair sides must have identical shapes")
        if self.gold_scores.shape[0] != self.embeddings_a.shape[0]:
            raise ShapeError("one gold score per pair required")
        if self.gold_scores.shape[0] < 2:
            raise EmptyInputError("rank correlation needs at least 2 pairs")
        if not np.all(np.isfinite(self.gold_scores)):
            raise ShapeError("gold scores must be finite")

    def __len__(self) -> int:
        return self.gold_scores.shape[0]

    def predicted_cosines(self) -> np.ndarray:
        a = normalize_rows(self.embeddings_a)
        b = normalize_rows(self.embeddings_b)
        return np.sum(a * b, axis=1)

    def positive_pairs(self, threshold: float):
        """Sides of the pairs whose gold score exceeds ``threshold``."""
        keep = self.gold_scores > threshold
        return self.embeddings_a[keep], self.embeddings_b[keep]


@dataclass
class LabeledEmbeddingSet:
    """M vectors with integer class labels in [0, num_classes)."""

    embeddings: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.embeddings.ndim != 2:
            raise ShapeError("embeddings must be a 2-D array")
        if self.labels.shape[0] != self.embeddings.shape[0]:
            raise ShapeError("one label per embedding required")
        if self.labels.shape[0] and self.labels.min() < 0:
            raise ShapeError("labels must be non-negative")
        if self.labels.shape[0] < self.num_classes:
            raise ShapeError("fewer samples than classes")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.shape[0] else 0


def spearman(pairs: ScoredPairSet) -> float:
    """Spearman rank correlation between predicted cosines and gold scores.

    Ties receive average ranks. Constant inputs on either side make the
    ranking degenerate and raise DegenerateRankError.
    """
    predicted = pairs.predicted_cosines()
    gold = pairs.gold_scores
    if np.all(predicted == predicted[0]) or np.all(gold == gold[0]):
        raise DegenerateRankError("constant scores admit no rank correlation")
    return float(spearmanr(predicted, gold).statistic)


def alignment(pairs_a: np.ndarray, pairs_b: np.ndarray) -> float:
    """Mean squared distance between positive pairs (lower is better).

    For unit vectors this equals 2 - 2 * mean cosine and lies in [0, 4].
    """
    a = np.asarray(pairs_a, dtype=np.float64)
    b = np.asarray(pairs_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError("pair sides must have identical shapes")
    if a.ndim != 2 or a.shape[0] == 0:
        raise EmptyInputError("alignment needs at least one pair")
    return float(np.sum((a - b) ** 2, axis=1).mean())


def uniformity(embeddings: np.ndarray) -> float:
    """Log-mean Gaussian-kernel distance over all distinct unordered pairs.

    Always <= 0; equals 0 only when every vector coincides. Self-pairs are
    excluded so the constant e^0 mass cannot mask the spread.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise EmptyInputError("uniformity needs at least two vectors")
    sq = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    iu = np.triu_indices(x.shape[0], k=1)
    return float(np.log(np.mean(np.exp(-2.0 * sq[iu]))))


def _check_label_arrays(predicted, true):
    predicted = np.asarray(predicted)
    true = np.asarray(true)
    if predicted.shape != true.shape or predicted.ndim != 1:
        raise ShapeError(
            f"label arrays must be 1-D and equal length, got {predicted.shape} vs {true.shape}"
        )
    if predicted.shape[0] == 0:
        raise EmptyInputError("no labels to compare")
    return predicted, true


def ami(predicted_labels, true_labels) -> float:
    """Adjusted mutual information between two partitions.

    1.0 for identical partitions up to relabeling; near 0 in expectation
    for independent random partitions.
    """
    predicted, true = _check_label_arrays(predicted_labels, true_labels)
    return float(adjusted_mutual_info_score(true, predicted))


def clustering_accuracy(predicted_labels, true_labels) -> float:
    """Accuracy after optimally matching predicted clusters to true classes.

    The matching maximizes the contingency mass via the Hungarian method;
    rectangular contingency tables (K != number of classes) are handled
    directly, which is equivalent to zero-padding to square.
    """
    predicted, true = _check_label_arrays(predicted_labels, true_labels)
    pred_ids, pred_inv = np.unique(predicted, return_inverse=True)
    true_ids, true_inv = np.unique(true, return_inverse=True)
    contingency = np.zeros((pred_ids.shape[0], true_ids.shape[0]), dtype=np.int64)
    np.add.at(contingency, (pred_inv, true_inv), 1)
    rows, cols = linear_sum_assignment(contingency, maximize=True)
    return float(contingency[rows, cols].sum()) / predicted.shape[0]
