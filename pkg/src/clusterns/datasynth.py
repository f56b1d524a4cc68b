"""Labeled synthetic datasets: directional Gaussian mixtures on the sphere.

Class directions are random unit vectors redrawn until every pair is
separated by the requested cosine gap; samples add isotropic noise before
renormalization, so ``intra_concentration`` directly controls how tight
each class sits around its direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import normalize_rows
from .errors import ConfigError, EmptyInputError, GenerationError, ParseError
from .evaluation import LabeledEmbeddingSet, ScoredPairSet

MAX_REJECTION_ROUNDS = 1000
DATASET_HEADER_PREFIX = "clusterns-dataset v1"
PAIRS_HEADER_PREFIX = "clusterns-pairs v1"


@dataclass
class MixtureSpec:
    """Shape and separation parameters of one synthetic mixture."""

    num_classes: int
    dim: int
    samples_per_class: int
    intra_concentration: float
    min_inter_cosine_gap: float
    seed: int

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes", field="mixture.num_classes")
        if self.dim < 2:
            raise ConfigError("dimension must be >= 2", field="mixture.dim")
        if self.samples_per_class < 2:
            raise ConfigError(
                "need at least 2 samples per class", field="mixture.samples_per_class"
            )
        if self.intra_concentration < 0.0:
            raise ConfigError(
                "noise scale must be >= 0", field="mixture.intra_concentration"
            )
        if not 0.0 <= self.min_inter_cosine_gap <= 2.0:
            raise ConfigError(
                "separation gap must lie in [0, 2]", field="mixture.min_inter_cosine_gap"
            )


def class_directions(spec: MixtureSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw separated unit directions, one per class, by rejection.

    Each direction is redrawn until it clears the cosine limit against all
    accepted ones, which scales to far more classes than redrawing the
    whole set at once.
    """
    limit = 1.0 - spec.min_inter_cosine_gap
    dirs = np.zeros((spec.num_classes, spec.dim))
    for c in range(spec.num_classes):
        for _ in range(MAX_REJECTION_ROUNDS):
            candidate = rng.standard_normal(spec.dim)
            candidate /= np.linalg.norm(candidate)
            if c == 0 or float((dirs[:c] @ candidate).max()) <= limit:
                dirs[c] = candidate
                break
        else:
            raise GenerationError(
                f"could not place direction {c + 1} of {spec.num_classes} at "
                f"cosine <= {limit} in {MAX_REJECTION_ROUNDS} rounds"
            )
    return dirs


def generate(spec: MixtureSpec) -> LabeledEmbeddingSet:
    """Deterministically generate a balanced labeled mixture."""
    rng = np.random.default_rng(spec.seed)
    dirs = class_directions(spec, rng)
    features = []
    labels = []
    for c in range(spec.num_classes):
        noise = spec.intra_concentration * rng.standard_normal(
            (spec.samples_per_class, spec.dim)
        )
        features.append(normalize_rows(dirs[c] + noise))
        labels.extend([c] * spec.samples_per_class)
    return LabeledEmbeddingSet(np.vstack(features), np.array(labels, dtype=np.int64))


def write_dataset(path, dataset: LabeledEmbeddingSet) -> None:
    """Write line-delimited records: a versioned header, then
    ``label<TAB>c1<TAB>...<TAB>cd`` with full-precision decimal floats."""
    lines = [f"{DATASET_HEADER_PREFIX} dim={dataset.dim}"]
    for label, row in zip(dataset.labels, dataset.embeddings):
        lines.append("\t".join([str(int(label))] + [repr(float(x)) for x in row]))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dataset(path) -> LabeledEmbeddingSet:
    """Read a dataset written by :func:`write_dataset`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise EmptyInputError(f"{path} is empty")
    header = lines[0]
    if not header.startswith(DATASET_HEADER_PREFIX):
        raise ParseError(f"unrecognized header {header!r}", line=1)
    try:
        dim = int(header.split("dim=", 1)[1])
    except (IndexError, ValueError):
        raise ParseError(f"malformed header {header!r}", line=1) from None
    if len(lines) == 1:
        raise EmptyInputError(f"{path} contains a header but no records")
    labels = np.zeros(len(lines) - 1, dtype=np.int64)
    features = np.zeros((len(lines) - 1, dim))
    for i, line in enumerate(lines[1:]):
        parts = line.split("\t")
        if len(parts) != dim + 1:
            raise ParseError(
                f"expected 1 label and {dim} coordinates, found {len(parts)} fields",
                line=i + 2,
            )
        try:
            labels[i] = int(parts[0])
            features[i] = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise ParseError(str(exc), line=i + 2) from None
    return LabeledEmbeddingSet(features, labels)


def write_scored_pairs(path, pairs: ScoredPairSet) -> None:
    """Write scored pairs: ``gold<TAB>a1..ad<TAB>b1..bd`` per line."""
    dim = pairs.embeddings_a.shape[1]
    lines = [f"{PAIRS_HEADER_PREFIX} dim={dim}"]
    for gold, a, b in zip(pairs.gold_scores, pairs.embeddings_a, pairs.embeddings_b):
        fields = [repr(float(gold))]
        fields += [repr(float(x)) for x in a]
        fields += [repr(float(x)) for x in b]
        lines.append("\t".join(fields))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_scored_pairs(path) -> ScoredPairSet:
    """Read a scored-pair file written by :func:`write_scored_pairs`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise EmptyInputError(f"{path} is empty")
    header = lines[0]
    if not header.startswith(PAIRS_HEADER_PREFIX):
        raise ParseError(f"unrecognized header {header!r}", line=1)
    try:
        dim = int(header.split("dim=", 1)[1])
    except (IndexError, ValueError):
        raise ParseError(f"malformed header {header!r}", line=1) from None
    if len(lines) == 1:
        raise EmptyInputError(f"{path} contains a header but no records")
    n = len(lines) - 1
    gold = np.zeros(n)
    a = np.zeros((n, dim))
    b = np.zeros((n, dim))
    for i, line in enumerate(lines[1:]):
        parts = line.split("\t")
        if len(parts) != 1 + 2 * dim:
            raise ParseError(
                f"expected 1 score and {2 * dim} coordinates, found {len(parts)} fields",
                line=i + 2,
            )
        try:
            gold[i] = float(parts[0])
            a[i] = [float(p) for p in parts[1 : dim + 1]]
            b[i] = [float(p) for p in parts[dim + 1 :]]
        except ValueError as exc:
            raise ParseError(str(exc), line=i + 2) from None
    return ScoredPairSet(a, b, gold)
