"""In-batch K-means on the unit sphere with momentum centroid updates.

Centroids live on the unit sphere because assignment uses cosine
similarity; they are renormalized after every momentum blend. State is
carried across training steps by :class:`CentroidSet`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingBatch, mean_offdiagonal_similarity, normalize_rows
from .errors import ConfigError, InsufficientSamplesError, ParseError

INIT_MODES = ("local", "global")


@dataclass
class ClusterConfig:
    """Hyperparameters of the in-batch clustering."""

    k: int
    gamma: float
    sigma: float
    warmup_cap: int
    init_mode: str = "local"

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("cluster count must be >= 2", field="cluster.k")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("momentum must lie in [0, 1]", field="cluster.gamma")
        if not 0.0 < self.sigma < 1.0:
            raise ConfigError(
                "similarity threshold must lie in (0, 1)", field="cluster.sigma"
            )
        if self.warmup_cap < 1:
            raise ConfigError("warm-up cap must be >= 1", field="cluster.warmup_cap")
        if self.init_mode not in INIT_MODES:
            raise ConfigError(
                f"init_mode must be one of {INIT_MODES}", field="cluster.init_mode"
            )


@dataclass
class CentroidSet:
    """K unit-norm centroids plus initialization bookkeeping."""

    centroids: np.ndarray
    initialized: bool = True
    step_initialized_at: int = 0

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @classmethod
    def uninitialized(cls, dim: int) -> "CentroidSet":
        return cls(np.zeros((0, dim)), initialized=False, step_initialized_at=-1)


@dataclass
class ClusterAssignment:
    """Hard assignment of N samples to K clusters."""

    assigned_cluster: np.ndarray
    cluster_members: list = field(default_factory=list)
    cluster_sizes: np.ndarray = None

    @property
    def n(self) -> int:
        return self.assigned_cluster.shape[0]

    @property
    def k(self) -> int:
        return self.cluster_sizes.shape[0]


def should_initialize(batch: EmbeddingBatch, config: ClusterConfig, step: int) -> bool:
    """Decide whether clustering should start at this step.

    True once the batch has spread out (mean off-diagonal anchor similarity
    at or below ``sigma``) or once the warm-up cap is reached, whichever
    comes first.
    """
    if step >= config.warmup_cap:
        return True
    return mean_offdiagonal_similarity(batch) <= config.sigma


def initialize_centroids(
    batch: EmbeddingBatch, k: int, seed: int, step: int = 0
) -> CentroidSet:
    """Pick K anchors as initial centroids.

    The first pick is a seeded-random anchor; every subsequent pick is the
    not-yet-selected anchor least similar to the previous pick (ties to the
    lowest index).
    """
    anchors = batch.anchors
    n = anchors.shape[0]
    if n < k:
        raise InsufficientSamplesError(f"need at least {k} samples to seed, got {n}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    for _ in range(k - 1):
        sims = anchors @ anchors[chosen[-1]]
        sims[chosen] = np.inf  # exclude already-selected anchors
        chosen.append(int(np.argmin(sims)))
    return CentroidSet(anchors[chosen].copy(), initialized=True, step_initialized_at=step)


def assign(batch: EmbeddingBatch, centroids: CentroidSet) -> ClusterAssignment:
    """Assign each anchor to its most similar centroid (ties to lowest index)."""
    sims = batch.anchors @ centroids.centroids.T
    assigned = np.argmax(sims, axis=1)  # argmax keeps the first (lowest) index on ties
    k = centroids.k
    members = [np.flatnonzero(assigned == i) for i in range(k)]
    sizes = np.array([m.shape[0] for m in members], dtype=np.int64)
    return ClusterAssignment(assigned, members, sizes)


def momentum_update(
    centroids: CentroidSet,
    assignment: ClusterAssignment,
    batch: EmbeddingBatch,
    gamma: float,
) -> CentroidSet:
    """Blend each non-empty cluster's fresh mean into its centroid.

    c_i <- normalize((1 - gamma) * c_i + gamma * mean of members). Empty
    clusters keep their previous centroid.
    """
    new = centroids.centroids.copy()
    for i, members in enumerate(assignment.cluster_members):
        if members.shape[0] == 0:
            continue
        fresh = batch.anchors[members].mean(axis=0)
        blended = (1.0 - gamma) * new[i] + gamma * fresh
        norm = np.linalg.norm(blended)
        if norm > 0.0:
            new[i] = blended / norm
        # a zero-norm blend (exactly antipodal mean) keeps the old direction
    return CentroidSet(
        new,
        initialized=centroids.initialized,
        step_initialized_at=centroids.step_initialized_at,
    )


def false_negative_rate(assignment: ClusterAssignment) -> float:
    """Fraction of samples whose cluster has at least two members."""
    sizes = assignment.cluster_sizes
    shared = int(sizes[sizes >= 2].sum())
    return shared / assignment.n


def write_centroids(path, centroids: CentroidSet, step: int | None = None) -> None:
    """Write a centroid snapshot: a header line, then one row per centroid.

    Format: ``clusterns-centroids v1 K=<k> d=<d> initialized=<0|1> step=<s>``
    followed by K lines of d space-separated full-precision floats.
    """
    if step is None:
        step = centroids.step_initialized_at
    k = centroids.k
    d = centroids.dim
    lines = [
        f"clusterns-centroids v1 K={k} d={d} "
        f"initialized={int(centroids.initialized)} step={step}"
    ]
    for row in centroids.centroids:
        lines.append(" ".join(repr(float(x)) for x in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_centroids(path) -> CentroidSet:
    """Read a snapshot written by :func:`write_centroids`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty centroid snapshot", line=1)
    header = lines[0].split()
    if header[:2] != ["clusterns-centroids", "v1"]:
        raise ParseError(f"unrecognized header {lines[0]!r}", line=1)
    try:
        fields = dict(part.split("=", 1) for part in header[2:])
        k = int(fields["K"])
        d = int(fields["d"])
        initialized = bool(int(fields["initialized"]))
        step = int(fields["step"])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed header: {exc}", line=1) from None
    if len(lines) - 1 != k:
        raise ParseError(f"expected {k} centroid rows, found {len(lines) - 1}", line=len(lines))
    rows = np.zeros((k, d))
    for i, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != d:
            raise ParseError(f"expected {d} coordinates, found {len(parts)}", line=i + 2)
        try:
            rows[i] = [float(p) for p in parts]
        except ValueError:
            raise ParseError("non-numeric coordinate", line=i + 2) from None
    return CentroidSet(rows, initialized=initialized, step_initialized_at=step)


def farthest_first_seeds(points: np.ndarray, k: int, seed: int) -> list:
    """Seed indices by farthest-first traversal (min over max-cosine-to-selected).

    Used by the evaluation K-means, where duplicate seeds in one tight
    cluster would be wasted; the training-time initializer above keeps the
    last-pick-only rule instead.
    """
    n = points.shape[0]
    if n < k:
        raise InsufficientSamplesError(f"need at least {k} samples to seed, got {n}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    max_sim = points @ points[chosen[0]]
    for _ in range(k - 1):
        max_sim[chosen] = np.inf
        nxt = int(np.argmin(max_sim))
        chosen.append(nxt)
        max_sim = np.maximum(max_sim, points @ points[nxt])
    return chosen


def spherical_kmeans(
    points: np.ndarray, k: int, seed: int, max_iter: int = 100
) -> np.ndarray:
    """Cosine-metric K-means over unit vectors; returns per-point labels.

    Plain Lloyd iterations: the momentum update with gamma=1 replaces each
    centroid by its cluster's normalized mean. Stops when the assignment is
    stable.
    """
    points = normalize_rows(np.asarray(points, dtype=np.float64))
    pseudo = EmbeddingBatch(points, points)
    centroids = CentroidSet(points[farthest_first_seeds(points, k, seed)].copy())
    labels = None
    for _ in range(max_iter):
        assignment = assign(pseudo, centroids)
        if labels is not None and np.array_equal(assignment.assigned_cluster, labels):
            break
        labels = assignment.assigned_cluster
        centroids = momentum_update(centroids, assignment, pseudo, gamma=1.0)
    return labels
