"""Contrastive training objectives and their analytic gradients.

Three objectives: plain InfoNCE over in-batch positives, a variant whose
denominator also carries one weighted hard negative per sample, and a
bidirectional margin loss that keeps false-negative similarity inside a
band below the positive similarity. They combine as

    total = l_cl + lambda_bml * l_bml.

Gradients are taken with respect to the raw anchor/positive coordinates:
since batches are unit-norm, that means the naive gradient projected onto
the tangent plane of the sphere at each embedding. Hard-negative vectors
are momentum-tracked statistics, not parameters, so no gradient flows
into them. Softmax denominators use max-subtraction so every intermediate
stays O(1) even at temperatures near 0.05.

Each loss is split into a forward pass (value plus cached softmax terms)
and gradient assembly; the finite-difference oracle differences the same
forward pass the analytic gradients are derived from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingBatch
from .errors import ConfigError, NormalizationError
from .negatives import NegativeAnnotation


@dataclass
class LossConfig:
    """Weights and margins of the combined objective."""

    tau: float = 0.05
    mu: float = 1.0
    lambda_bml: float = 0.01
    alpha: float = 0.1
    beta: float = 0.5
    use_hard_negatives: bool = True
    use_bml: bool = True

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ConfigError("temperature must be positive", field="loss.tau")
        if self.mu < 0.0:
            raise ConfigError("hard-negative weight must be >= 0", field="loss.mu")
        if self.lambda_bml < 0.0:
            raise ConfigError("margin-loss weight must be >= 0", field="loss.lambda_bml")
        if self.alpha < 0.0:
            raise ConfigError("upper margin must be >= 0", field="loss.alpha")
        if self.beta <= self.alpha:
            raise ConfigError(
                "lower margin must exceed upper margin (beta > alpha)",
                field="loss.beta",
            )


@dataclass
class LossBreakdown:
    """One loss evaluation: components, total, and gradients of the total."""

    l_cl: float
    l_bml: float
    total: float
    grad_anchors: np.ndarray
    grad_positives: np.ndarray


def _project_rows(grad: np.ndarray, unit_rows: np.ndarray) -> np.ndarray:
    """Project each gradient row onto the tangent plane at its unit vector."""
    radial = np.sum(grad * unit_rows, axis=1, keepdims=True)
    return grad - radial * unit_rows


# --- plain InfoNCE -------------------------------------------------------

def _infonce_forward(batch: EmbeddingBatch, tau: float):
    x, p = batch.anchors, batch.positives
    n = x.shape[0]
    idx = np.arange(n)
    logits = (x @ p.T) / tau
    m = logits.max(axis=1)
    e = np.exp(logits - m[:, None])
    z = e.sum(axis=1)
    per_sample = -logits[idx, idx] + m + np.log(z)
    value = float(per_sample.mean())
    return value, (e, z, idx)


def _infonce_parts(batch: EmbeddingBatch, tau: float):
    value, (e, z, idx) = _infonce_forward(batch, tau)
    x, p = batch.anchors, batch.positives
    n = x.shape[0]
    dlogits = e / z[:, None]
    dlogits[idx, idx] -= 1.0
    dlogits /= tau * n
    grad_x = _project_rows(dlogits @ p, x)
    grad_p = _project_rows(dlogits.T @ x, p)
    return value, grad_x, grad_p


# --- InfoNCE with weighted hard negatives --------------------------------

def _infonce_hard_forward(batch: EmbeddingBatch, annotation: NegativeAnnotation,
                          tau: float, mu: float):
    x, p = batch.anchors, batch.positives
    hn = annotation.hard_negatives
    n = x.shape[0]
    idx = np.arange(n)
    pos_logits = (x @ p.T) / tau
    hard_logits = (x @ hn.T) / tau
    m = np.maximum(pos_logits.max(axis=1), hard_logits.max(axis=1))
    e_pos = np.exp(pos_logits - m[:, None])
    e_hard = np.exp(hard_logits - m[:, None])
    z = e_pos.sum(axis=1) + mu * e_hard.sum(axis=1)
    per_sample = -pos_logits[idx, idx] + m + np.log(z)
    value = float(per_sample.mean())
    return value, (e_pos, e_hard, z, idx)


def _infonce_hard_parts(batch: EmbeddingBatch, annotation: NegativeAnnotation,
                        tau: float, mu: float):
    value, (e_pos, e_hard, z, idx) = _infonce_hard_forward(batch, annotation, tau, mu)
    x, p = batch.anchors, batch.positives
    hn = annotation.hard_negatives
    n = x.shape[0]
    d_pos = e_pos / z[:, None]
    d_pos[idx, idx] -= 1.0
    d_pos /= tau * n
    d_hard = (mu / (tau * n)) * (e_hard / z[:, None])
    grad_x = _project_rows(d_pos @ p + d_hard @ hn, x)
    grad_p = _project_rows(d_pos.T @ x, p)
    return value, grad_x, grad_p


# --- bidirectional margin loss -------------------------------------------

def _bml_forward(batch: EmbeddingBatch, annotation: NegativeAnnotation,
                 alpha: float, beta: float):
    x, p = batch.anchors, batch.positives
    mask = annotation.false_negative_mask
    counts = mask.sum(axis=1).astype(np.float64)
    active = counts > 0
    n_active = int(active.sum())
    if n_active == 0:
        return 0.0, None
    anchor_sims = x @ x.T
    pos_sim = np.sum(x * p, axis=1)
    safe_counts = np.where(active, counts, 1.0)
    mean_fn_sim = (anchor_sims * mask).sum(axis=1) / safe_counts
    delta = mean_fn_sim - pos_sim
    upper = delta + alpha
    lower = -delta - beta
    per_anchor = np.maximum(upper, 0.0) + np.maximum(lower, 0.0)
    value = float(per_anchor[active].mean())
    return value, (mask, active, n_active, safe_counts, upper, lower)


def _bml_parts(batch: EmbeddingBatch, annotation: NegativeAnnotation,
               alpha: float, beta: float):
    value, cache = _bml_forward(batch, annotation, alpha, beta)
    x, p = batch.anchors, batch.positives
    if cache is None:
        zeros = np.zeros_like(x)
        return 0.0, zeros, zeros.copy()
    mask, active, n_active, safe_counts, upper, lower = cache

    # d(per-anchor)/d(gap) is -1, 0, or +1 depending on the active arm
    slope = (upper > 0.0).astype(np.float64) - (lower > 0.0).astype(np.float64)
    weight = np.where(active, slope / n_active, 0.0)
    wc = weight / safe_counts
    grad_x = (
        wc[:, None] * (mask @ x)          # each anchor vs its false-negative mean
        - weight[:, None] * p             # minus its own positive
        + mask @ (wc[:, None] * x)        # each anchor as a false negative of others
    )
    grad_p = -weight[:, None] * x
    return value, _project_rows(grad_x, x), _project_rows(grad_p, p)


# --- public operations ----------------------------------------------------

def infonce(batch: EmbeddingBatch, config: LossConfig) -> LossBreakdown:
    """Mean InfoNCE over the batch; in-batch positives form the denominator."""
    value, grad_x, grad_p = _infonce_parts(batch, config.tau)
    return LossBreakdown(value, 0.0, value, grad_x, grad_p)


def infonce_hard(
    batch: EmbeddingBatch, annotation: NegativeAnnotation, config: LossConfig
) -> LossBreakdown:
    """InfoNCE whose denominator adds each sample's weighted hard negative.

    The hard-negative vectors are constants; with mu=0 this degenerates to
    :func:`infonce`.
    """
    value, grad_x, grad_p = _infonce_hard_parts(batch, annotation, config.tau, config.mu)
    return LossBreakdown(value, 0.0, value, grad_x, grad_p)


def bml(
    batch: EmbeddingBatch, annotation: NegativeAnnotation, config: LossConfig
) -> LossBreakdown:
    """Bidirectional margin loss over false-negative similarity gaps.

    For each anchor with false negatives, the gap is the mean false-negative
    cosine minus the positive cosine; the loss is zero while the gap stays
    in [-beta, -alpha] and grows linearly outside. Anchors without false
    negatives contribute nothing; the value is the mean over contributing
    anchors. The breakdown total carries the lambda_bml weighting.
    """
    value, grad_x, grad_p = _bml_parts(batch, annotation, config.alpha, config.beta)
    lam = config.lambda_bml
    return LossBreakdown(0.0, value, lam * value, lam * grad_x, lam * grad_p)


def total_loss(
    batch: EmbeddingBatch,
    annotation: NegativeAnnotation | None,
    config: LossConfig,
) -> LossBreakdown:
    """Combined objective: contrastive part plus weighted margin part.

    The contrastive part is the hard-negative variant when
    ``use_hard_negatives`` is set, plain InfoNCE otherwise; the margin part
    enters only when ``use_bml`` is set. The four on/off combinations are
    the ablation variants.
    """
    if annotation is None and (config.use_hard_negatives or config.use_bml):
        raise ConfigError(
            "an annotation is required when hard negatives or the margin loss are enabled"
        )
    if config.use_hard_negatives:
        l_cl, gx, gp = _infonce_hard_parts(batch, annotation, config.tau, config.mu)
    else:
        l_cl, gx, gp = _infonce_parts(batch, config.tau)
    if config.use_bml:
        l_bml, bx, bp = _bml_parts(batch, annotation, config.alpha, config.beta)
        gx = gx + config.lambda_bml * bx
        gp = gp + config.lambda_bml * bp
    else:
        l_bml = 0.0
    return LossBreakdown(l_cl, l_bml, l_cl + config.lambda_bml * l_bml, gx, gp)


def total_value(
    batch: EmbeddingBatch,
    annotation: NegativeAnnotation | None,
    config: LossConfig,
) -> float:
    """Value of :func:`total_loss` without gradient assembly."""
    if annotation is None and (config.use_hard_negatives or config.use_bml):
        raise ConfigError(
            "an annotation is required when hard negatives or the margin loss are enabled"
        )
    if config.use_hard_negatives:
        l_cl = _infonce_hard_forward(batch, annotation, config.tau, config.mu)[0]
    else:
        l_cl = _infonce_forward(batch, config.tau)[0]
    l_bml = _bml_forward(batch, annotation, config.alpha, config.beta)[0] if config.use_bml else 0.0
    return l_cl + config.lambda_bml * l_bml


def _unit_batch(anchors: np.ndarray, positives: np.ndarray) -> EmbeddingBatch:
    """Wrap already-normalized rows without re-running batch validation."""
    batch = EmbeddingBatch.__new__(EmbeddingBatch)
    batch.anchors = anchors
    batch.positives = positives
    return batch


def finite_difference_gradient(
    batch: EmbeddingBatch,
    annotation: NegativeAnnotation | None,
    config: LossConfig,
    epsilon: float = 1e-5,
    loss_fn=None,
):
    """Central-difference gradients of a loss for every embedding coordinate.

    Perturbs the raw (pre-normalization) coordinates and renormalizes the
    touched row, so the estimate includes the normalization Jacobian — the
    same quantity the analytic gradients report. ``loss_fn(batch,
    annotation, config)`` may return a float or a LossBreakdown; the
    default is the forward value of :func:`total_loss`.

    Returns (grad_anchors, grad_positives).
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ConfigError("epsilon must lie in [1e-7, 1e-4]")
    if loss_fn is None:
        loss_fn = total_value

    def evaluate(anchors, positives):
        result = loss_fn(_unit_batch(anchors, positives), annotation, config)
        return result.total if isinstance(result, LossBreakdown) else float(result)

    base_a, base_p = batch.anchors, batch.positives
    results = []
    for perturb_anchors in (True, False):
        base = base_a if perturb_anchors else base_p
        grad = np.zeros_like(base)
        for i in range(base.shape[0]):
            for c in range(base.shape[1]):
                values = []
                for sign in (epsilon, -epsilon):
                    row = base[i].copy()
                    row[c] += sign
                    norm = np.linalg.norm(row)
                    if norm == 0.0:
                        raise NormalizationError("perturbation produced a zero vector")
                    arr = base.copy()
                    arr[i] = row / norm
                    if perturb_anchors:
                        values.append(evaluate(arr, base_p))
                    else:
                        values.append(evaluate(base_a, arr))
                grad[i, c] = (values[0] - values[1]) / (2.0 * epsilon)
        results.append(grad)
    return results[0], results[1]
