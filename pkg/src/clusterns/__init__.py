"""Clustering-aware negative sampling for contrastive representation learning.

In-batch K-means supplies one hard negative per sample (the second most
similar centroid) and flags same-cluster batch members as false negatives,
which a bidirectional margin loss treats separately from ordinary
repulsion targets. This package implements the mechanism end to end at
desk scale: vector primitives, the clustering state machine, negative
annotation, losses with analytic gradients, a toy training loop, the
metric battery, synthetic data, and a CLI.
"""

__version__ = "0.1.0"

from .clustering import (
    CentroidSet,
    ClusterAssignment,
    ClusterConfig,
    assign,
    false_negative_rate,
    initialize_centroids,
    momentum_update,
    should_initialize,
    spherical_kmeans,
)
from .datasynth import MixtureSpec, generate, read_dataset, write_dataset
from .embedding import EmbeddingBatch, cosine, normalize, pairwise_similarity
from .errors import (
    BatchTooSmallError,
    ClusterNSError,
    ConfigError,
    DegenerateRankError,
    DivergenceError,
    EmptyInputError,
    GenerationError,
    InsufficientClustersError,
    InsufficientSamplesError,
    NormalizationError,
    ParseError,
    ShapeError,
)
from .evaluation import (
    LabeledEmbeddingSet,
    ScoredPairSet,
    alignment,
    ami,
    clustering_accuracy,
    spearman,
    uniformity,
)
from .losses import (
    LossBreakdown,
    LossConfig,
    bml,
    finite_difference_gradient,
    infonce,
    infonce_hard,
    total_loss,
)
from .negatives import NegativeAnnotation, annotate, false_negative_precision
from .training import (
    Encoder,
    TelemetryRow,
    TrainConfig,
    TrainResult,
    encode,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    train,
)
