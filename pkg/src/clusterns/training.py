"""Toy encoder and the clustering-aware contrastive training loop.

The encoder is a single linear projection onto the unit sphere; the two
views of a sample come from independent dropout masks on the projection
input, mirroring dropout-based positive construction at desk scale.

One training step: encode a mini-batch; while centroids are uninitialized,
optimize plain InfoNCE and watch for the initialization trigger; at the
trigger step, seed centroids heuristically; on every later step, assign
the batch, momentum-update the centroids, annotate hard/false negatives
from the updated centroids, and take one SGD step on the combined loss.

Every random draw is derived from (run seed, purpose tag, step index), so
a run is bitwise reproducible and a checkpoint resume replays the exact
trajectory of the uninterrupted run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .clustering import (
    CentroidSet,
    ClusterConfig,
    assign,
    false_negative_rate,
    initialize_centroids,
    momentum_update,
    should_initialize,
)
from .embedding import EmbeddingBatch, normalize_rows
from .errors import ConfigError, DivergenceError, NormalizationError, ShapeError
from .evaluation import LabeledEmbeddingSet
from .losses import LossConfig, infonce, total_loss
from .negatives import ANNOTATION_MODES, annotate

# rng stream tags; a draw is seeded by [seed, tag, step-or-epoch]
_TAG_WEIGHTS = 0
_TAG_SHUFFLE = 1
_TAG_DROPOUT = 2
_TAG_RANDOM_MODE = 3
_TAG_INIT_PICK = 4

CHECKPOINT_MAGIC = "clusterns-checkpoint v1"

TELEMETRY_HEADER = (
    "step",
    "mean_pos_sim",
    "mean_inbatch_neg_sim",
    "mean_hard_neg_sim",
    "mean_sample_centroid_sim",
    "mean_inter_centroid_sim",
    "mean_false_neg_sim",
    "false_negative_rate",
    "l_cl",
    "l_bml",
    "total",
)


@dataclass
class Encoder:
    """Trainable linear projection with a dropout rate for view construction."""

    weight: np.ndarray
    dropout_rate: float

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ShapeError("encoder weight must be a 2-D matrix")
        if not np.all(np.isfinite(self.weight)):
            raise DivergenceError("encoder weights are not finite")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout rate must lie in [0, 1)", field="train.dropout_rate")

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def initial(cls, d_in: int, d_out: int, dropout_rate: float, seed: int) -> "Encoder":
        rng = np.random.default_rng([seed, _TAG_WEIGHTS])
        weight = rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)
        return cls(weight, dropout_rate)


@dataclass
class TrainConfig:
    """Everything a training run needs, nested by concern."""

    steps: int
    batch_size: int
    learning_rate: float
    seed: int
    cluster: ClusterConfig
    loss: LossConfig
    telemetry_every: int = 1
    out_dim: int = 16
    dropout_rate: float = 0.1
    negative_mode: str = "standard"

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("need at least 1 step", field="train.steps")
        if self.batch_size < 2:
            raise ConfigError("batch size must be >= 2", field="train.batch_size")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning rate must be positive", field="train.learning_rate")
        if self.telemetry_every < 1:
            raise ConfigError("telemetry cadence must be >= 1", field="train.telemetry_every")
        if self.out_dim < 2:
            raise ConfigError("output dimension must be >= 2", field="train.out_dim")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout rate must lie in [0, 1)", field="train.dropout_rate")
        if self.negative_mode not in ANNOTATION_MODES:
            raise ConfigError(
                f"negative mode must be one of {ANNOTATION_MODES}",
                field="train.negative_mode",
            )

    @property
    def clustering_enabled(self) -> bool:
        # with both loss switches off the run is a plain contrastive
        # baseline and never builds centroids
        return self.loss.use_hard_negatives or self.loss.use_bml


@dataclass
class TelemetryRow:
    """One emitted step of training statistics.

    Centroid-dependent fields are None until clustering is initialized
    (and mean_false_neg_sim stays None for batches without same-cluster
    pairs); they serialize as empty CSV cells.
    """

    step: int
    mean_pos_sim: float
    mean_inbatch_neg_sim: float
    mean_hard_neg_sim: float | None
    mean_sample_centroid_sim: float | None
    mean_inter_centroid_sim: float | None
    mean_false_neg_sim: float | None
    false_negative_rate: float | None
    l_cl: float
    l_bml: float
    total: float

    def as_csv_fields(self) -> list:
        out = []
        for name in TELEMETRY_HEADER:
            value = getattr(self, name)
            if value is None:
                out.append("")
            elif name == "step":
                out.append(str(int(value)))
            else:
                out.append(repr(float(value)))
        return out


@dataclass
class TrainResult:
    encoder: Encoder
    centroids: CentroidSet
    telemetry: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.encoder, self.centroids, self.telemetry))


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def _encode_state(encoder: Encoder, features: np.ndarray, dropout_seed: int):
    """Project two dropout views; keep what the weight gradient needs."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != encoder.d_in:
        raise ShapeError(
            f"features of dimension {features.shape[-1] if features.ndim else 0} "
            f"do not match encoder input {encoder.d_in}"
        )
    rng = np.random.default_rng(dropout_seed)
    masked_a = features * _dropout_mask(rng, features.shape, encoder.dropout_rate)
    masked_p = features * _dropout_mask(rng, features.shape, encoder.dropout_rate)
    raw_a = masked_a @ encoder.weight
    raw_p = masked_p @ encoder.weight
    norms_a = np.linalg.norm(raw_a, axis=1)
    norms_p = np.linalg.norm(raw_p, axis=1)
    batch = EmbeddingBatch(raw_a, raw_p)
    return batch, masked_a, masked_p, norms_a, norms_p


def encode(encoder: Encoder, features: np.ndarray, dropout_seed: int) -> EmbeddingBatch:
    """Encode features into an anchor/positive batch of unit vectors."""
    return _encode_state(encoder, features, dropout_seed)[0]


def weight_gradient(
    encoder: Encoder,
    masked_a: np.ndarray,
    masked_p: np.ndarray,
    norms_a: np.ndarray,
    norms_p: np.ndarray,
    grad_anchors: np.ndarray,
    grad_positives: np.ndarray,
) -> np.ndarray:
    """Chain the loss gradients through normalization and the projection.

    The loss gradients are already tangential, so passing them through the
    normalization Jacobian only divides by the pre-normalization norm.
    """
    return masked_a.T @ (grad_anchors / norms_a[:, None]) + masked_p.T @ (
        grad_positives / norms_p[:, None]
    )


def sgd_step(encoder: Encoder, grad_weight: np.ndarray, learning_rate: float) -> Encoder:
    """One plain gradient-descent update on the encoder weight."""
    grad_weight = np.asarray(grad_weight, dtype=np.float64)
    if grad_weight.shape != encoder.weight.shape:
        raise ShapeError(
            f"gradient shape {grad_weight.shape} does not match weight {encoder.weight.shape}"
        )
    if not np.all(np.isfinite(grad_weight)):
        raise DivergenceError("non-finite weight gradient")
    return Encoder(encoder.weight - learning_rate * grad_weight, encoder.dropout_rate)


def _batch_indices(config: TrainConfig, n_samples: int, step: int) -> np.ndarray:
    """Mini-batch indices for a 1-based step: seeded per-epoch shuffling
    without replacement, recomputable from the step index alone."""
    per_epoch = n_samples // config.batch_size
    epoch = (step - 1) // per_epoch
    slot = (step - 1) % per_epoch
    perm = np.random.default_rng([config.seed, _TAG_SHUFFLE, epoch]).permutation(n_samples)
    return perm[slot * config.batch_size : (slot + 1) * config.batch_size]


def _offdiag_mean(matrix: np.ndarray) -> float:
    n = matrix.shape[0]
    return float((matrix.sum() - np.trace(matrix)) / (n * (n - 1)))


def _masked_mean_or_none(matrix: np.ndarray, mask: np.ndarray):
    total = int(mask.sum())
    if total == 0:
        return None
    return float(matrix[mask].sum() / total)


def _telemetry_row(step, batch, breakdown, centroids, assignment, annotation) -> TelemetryRow:
    pos_sims = np.sum(batch.anchors * batch.positives, axis=1)
    cross = batch.anchors @ batch.positives.T
    row = TelemetryRow(
        step=step,
        mean_pos_sim=float(pos_sims.mean()),
        mean_inbatch_neg_sim=_offdiag_mean(cross),
        mean_hard_neg_sim=None,
        mean_sample_centroid_sim=None,
        mean_inter_centroid_sim=None,
        mean_false_neg_sim=None,
        false_negative_rate=None,
        l_cl=breakdown.l_cl,
        l_bml=breakdown.l_bml,
        total=breakdown.total,
    )
    if annotation is not None:
        cents = centroids.centroids
        row.mean_hard_neg_sim = float(
            np.sum(batch.anchors * annotation.hard_negatives, axis=1).mean()
        )
        row.mean_sample_centroid_sim = float(
            np.sum(batch.anchors * cents[annotation.nearest_centroid_index], axis=1).mean()
        )
        inter = cents @ cents.T
        iu = np.triu_indices(cents.shape[0], k=1)
        row.mean_inter_centroid_sim = float(inter[iu].mean())
        row.mean_false_neg_sim = _masked_mean_or_none(
            batch.anchors @ batch.anchors.T, annotation.false_negative_mask
        )
        row.false_negative_rate = false_negative_rate(assignment)
    return row


def train(
    dataset: LabeledEmbeddingSet,
    config: TrainConfig,
    resume: tuple | None = None,
) -> TrainResult:
    """Run the training loop; returns the encoder, centroid state, and telemetry.

    ``resume`` is an optional (encoder, centroids, step) triple from
    :func:`load_checkpoint`; the remaining steps replay exactly as they
    would have in the uninterrupted run.
    """
    features = dataset.embeddings
    n_samples = features.shape[0]
    if n_samples < config.batch_size:
        raise ConfigError(
            f"dataset has {n_samples} samples, fewer than batch size {config.batch_size}"
        )

    if resume is not None:
        encoder, centroids, start_step = resume
        if start_step >= config.steps:
            raise ConfigError(
                f"checkpoint is at step {start_step}, run is only {config.steps} steps"
            )
        if encoder.d_in != features.shape[1]:
            raise ConfigError(
                f"checkpoint encoder expects {encoder.d_in}-dimensional features, "
                f"dataset has {features.shape[1]}"
            )
        if encoder.d_out != config.out_dim:
            raise ConfigError(
                f"checkpoint encoder output {encoder.d_out} does not match "
                f"configured out_dim {config.out_dim}"
            )
    else:
        encoder = Encoder.initial(
            features.shape[1], config.out_dim, config.dropout_rate, config.seed
        )
        centroids = CentroidSet.uninitialized(config.out_dim)
        start_step = 0

    telemetry = []
    for step in range(start_step + 1, config.steps + 1):
        idx = _batch_indices(config, n_samples, step)
        try:
            batch, masked_a, masked_p, norms_a, norms_p = _encode_state(
                encoder, features[idx], [config.seed, _TAG_DROPOUT, step]
            )
        except NormalizationError as exc:
            # weights have blown up or collapsed past float range
            raise DivergenceError(f"encoder output not normalizable ({exc})", step=step)

        assignment = None
        annotation = None
        if config.clustering_enabled and not centroids.initialized:
            if should_initialize(batch, config.cluster, step):
                seeding = batch
                if config.cluster.init_mode == "global":
                    full = normalize_rows(features @ encoder.weight)
                    seeding = EmbeddingBatch(full, full)
                centroids = initialize_centroids(
                    seeding,
                    config.cluster.k,
                    seed=[config.seed, _TAG_INIT_PICK, step],
                    step=step,
                )
            # the trigger step itself still trains on plain InfoNCE
            breakdown = infonce(batch, config.loss)
        elif config.clustering_enabled and step > centroids.step_initialized_at:
            assignment = assign(batch, centroids)
            centroids = momentum_update(centroids, assignment, batch, config.cluster.gamma)
            annotation = annotate(
                batch,
                centroids,
                assignment,
                mode=config.negative_mode,
                seed=[config.seed, _TAG_RANDOM_MODE, step],
            )
            breakdown = total_loss(batch, annotation, config.loss)
        else:
            breakdown = infonce(batch, config.loss)

        if not np.isfinite(breakdown.total):
            raise DivergenceError("non-finite loss", step=step)
        grad_w = weight_gradient(
            encoder, masked_a, masked_p, norms_a, norms_p,
            breakdown.grad_anchors, breakdown.grad_positives,
        )
        if not np.all(np.isfinite(grad_w)):
            raise DivergenceError("non-finite weight gradient", step=step)
        encoder = sgd_step(encoder, grad_w, config.learning_rate)

        if step % config.telemetry_every == 0 or step == config.steps:
            telemetry.append(
                _telemetry_row(step, batch, breakdown, centroids, assignment, annotation)
            )

    return TrainResult(encoder, centroids, telemetry)


def write_telemetry(path, rows) -> None:
    """Write telemetry rows as CSV with the fixed documented header."""
    lines = [",".join(TELEMETRY_HEADER)]
    for row in rows:
        lines.append(",".join(row.as_csv_fields()))
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def save_checkpoint(path, encoder: Encoder, centroids: CentroidSet, step: int) -> None:
    """Serialize encoder + centroid state to a flat deterministic binary file."""
    header = {
        "step": int(step),
        "d_in": encoder.d_in,
        "d_out": encoder.d_out,
        "dropout_rate": encoder.dropout_rate,
        "centroid_k": centroids.k,
        "centroid_dim": centroids.dim,
        "centroid_initialized": bool(centroids.initialized),
        "centroid_step": int(centroids.step_initialized_at),
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC.encode("ascii") + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(encoder.weight).tobytes())
        fh.write(np.ascontiguousarray(centroids.centroids).tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (encoder, centroids, step)."""
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n").decode("ascii", errors="replace")
        if magic != CHECKPOINT_MAGIC:
            raise ShapeError(f"not a checkpoint file: magic {magic!r}")
        header = json.loads(fh.readline().decode("ascii"))
        weight_count = header["d_in"] * header["d_out"]
        weight = np.frombuffer(fh.read(weight_count * 8), dtype=np.float64)
        weight = weight.reshape(header["d_in"], header["d_out"]).copy()
        cent_count = header["centroid_k"] * header["centroid_dim"]
        cents = np.frombuffer(fh.read(cent_count * 8), dtype=np.float64)
        cents = cents.reshape(header["centroid_k"], header["centroid_dim"]).copy()
    encoder = Encoder(weight, header["dropout_rate"])
    centroids = CentroidSet(
        cents,
        initialized=header["centroid_initialized"],
        step_initialized_at=header["centroid_step"],
    )
    return encoder, centroids, header["step"]
