"""Acceptance suite: one test per release criterion.

Each test prints a single ``ACCEPTANCE <id>: PASS`` line on success (run
with ``pytest -s tests/test_acceptance.py`` to see them); a failed
criterion fails its test. Tolerances are pinned here, not configurable.
"""

import time

import numpy as np
import pytest
from click.testing import CliRunner

from clusterns.cli import compute_eval_metrics, main
from clusterns.clustering import (
    CentroidSet,
    ClusterConfig,
    assign,
    initialize_centroids,
    momentum_update,
)
from clusterns.datasynth import MixtureSpec, generate
from clusterns.embedding import EmbeddingBatch, normalize_rows
from clusterns.evaluation import ami, clustering_accuracy, spearman, uniformity
from clusterns.losses import (
    LossConfig,
    bml,
    finite_difference_gradient,
    infonce,
    infonce_hard,
    total_loss,
    total_value,
)
from clusterns.losses import _bml_forward, _infonce_forward, _infonce_hard_forward
from clusterns.training import TrainConfig, train
from conftest import random_batch, random_instance
from oracles import (
    accuracy_permutation_oracle,
    assignment_oracle,
    momentum_oracle,
    spearman_oracle,
    uniformity_oracle,
)
from test_evaluation import pair_set_with_cosines
from test_losses import gap_fixture

GRAD_RTOL = 1e-4
GRAD_ATOL = 1e-7

STANDARD_MIXTURE = MixtureSpec(
    num_classes=4, dim=16, samples_per_class=64,
    intra_concentration=0.1, min_inter_cosine_gap=0.8, seed=13,
)
EIGHT_CLASS_MIXTURE = MixtureSpec(
    num_classes=8, dim=16, samples_per_class=64,
    intra_concentration=0.1, min_inter_cosine_gap=0.8, seed=23,
)


def default_train_config(seed=11, k=8, steps=300, use_hard=True, use_bml=True):
    return TrainConfig(
        steps=steps, batch_size=32, learning_rate=0.5, seed=seed,
        cluster=ClusterConfig(k=k, gamma=1e-3, sigma=0.4, warmup_cap=50),
        loss=LossConfig(tau=0.05, mu=1.0, lambda_bml=0.01, alpha=0.1, beta=0.5,
                        use_hard_negatives=use_hard, use_bml=use_bml),
        telemetry_every=1, out_dim=16, dropout_rate=0.1,
    )


def report(criterion):
    print(f"ACCEPTANCE {criterion}: PASS")


@pytest.fixture(scope="module")
def standard_dataset():
    return generate(STANDARD_MIXTURE)


@pytest.fixture(scope="module")
def standard_run(standard_dataset):
    started = time.monotonic()
    result = train(standard_dataset, default_train_config())
    return result, time.monotonic() - started


def test_c1_gradient_oracle():
    """Analytic gradients of all four losses match central differences."""
    config = LossConfig()
    cases = (
        (lambda b, a, c: infonce(b, c),
         lambda b, a, c: _infonce_forward(b, c.tau)[0]),
        (infonce_hard,
         lambda b, a, c: _infonce_hard_forward(b, a, c.tau, c.mu)[0]),
        (bml,
         lambda b, a, c: c.lambda_bml * _bml_forward(b, a, c.alpha, c.beta)[0]),
        (total_loss, total_value),
    )
    started = time.monotonic()
    for seed in range(20):
        batch, _, _, annotation = random_instance(seed, n=16, d=8, k=4)
        for op, value_fn in cases:
            analytic = op(batch, annotation, config)
            fd_a, fd_p = finite_difference_gradient(
                batch, annotation, config, epsilon=1e-5, loss_fn=value_fn
            )
            for got, expected in ((analytic.grad_anchors, fd_a),
                                  (analytic.grad_positives, fd_p)):
                assert np.all(
                    np.abs(got - expected) <= GRAD_ATOL + GRAD_RTOL * np.abs(expected)
                )
    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"gradient suite took {elapsed:.2f}s"
    report("C1 gradient oracle")


def test_c2_mu_zero_degeneration():
    """infonce_hard with mu=0 equals infonce within 1e-12 on 100 batches."""
    config = LossConfig(mu=0.0)
    for seed in range(100):
        batch, _, _, annotation = random_instance(seed, n=12, d=6, k=4)
        plain = infonce(batch, config)
        degenerate = infonce_hard(batch, annotation, config)
        assert abs(degenerate.total - plain.total) <= 1e-12
    report("C2 mu=0 degeneration")


def test_c3_bml_interval_property():
    """Per-anchor margin loss is exactly zero inside [-beta, -alpha] and
    strictly positive outside, over the full margin grid."""
    alphas = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25)
    betas = (0.3, 0.4, 0.5, 0.6)
    cos_pos = 0.75
    boundary_guard = 1e-9  # grid points this close to a kink sit at float noise
    for alpha in alphas:
        for beta in betas:
            config = LossConfig(alpha=alpha, beta=beta, lambda_bml=1.0)
            gaps = np.arange(-beta - 0.1, -alpha + 0.1 + 1e-12, 1e-3)
            for gap in gaps:
                batch, annotation = gap_fixture(cos_pos + gap, cos_pos)
                value = bml(batch, annotation, config).l_bml
                # classify by the gap the fixture actually realizes
                realized = float(
                    batch.anchors[0] @ batch.anchors[1]
                    - batch.anchors[0] @ batch.positives[0]
                )
                if -beta + boundary_guard <= realized <= -alpha - boundary_guard:
                    assert value == 0.0
                elif realized < -beta - boundary_guard or realized > -alpha + boundary_guard:
                    assert value > 0.0
                else:
                    assert 0.0 <= value <= 1e-12
    report("C3 margin interval property")


def test_c4_clustering_oracle():
    """Assignment equals brute force everywhere; momentum update matches
    hand-computed fixtures to 1e-12."""
    for n in (2, 3, 8, 17, 33, 64):
        for k in (2, 5, 16):
            batch = random_batch(1000 + 31 * n + k, n=n, d=6)
            centroids = CentroidSet(
                normalize_rows(np.random.default_rng(n * k).standard_normal((k, 6))))
            assignment = assign(batch, centroids)
            np.testing.assert_array_equal(
                assignment.assigned_cluster,
                assignment_oracle(batch.anchors, centroids.centroids),
            )

    a = normalize_rows(np.array([[1.0, 0.2, 0.0]]))[0]
    b = normalize_rows(np.array([[0.9, -0.1, 0.3]]))[0]
    c = normalize_rows(np.array([[-1.0, 0.0, 0.05]]))[0]
    batch = EmbeddingBatch(np.stack([a, b, c]), np.stack([a, b, c]))
    centroids = CentroidSet(np.stack([np.eye(3)[0], -np.eye(3)[0]]))
    assignment = assign(batch, centroids)
    for gamma in (0.0, 0.5, 1.0):
        updated = momentum_update(centroids, assignment, batch, gamma=gamma)
        np.testing.assert_allclose(
            updated.centroids[0],
            momentum_oracle(np.eye(3)[0], [a, b], gamma) if gamma > 0 else np.eye(3)[0],
            atol=1e-12,
        )
        np.testing.assert_allclose(
            updated.centroids[1],
            momentum_oracle(-np.eye(3)[0], [c], gamma) if gamma > 0 else -np.eye(3)[0],
            atol=1e-12,
        )
    report("C4 clustering oracle")


def test_c5_clustering_quality(standard_dataset):
    """In-batch clustering reaches AMI >= 0.9 on the separated mixture
    within 50 steps across the momentum grid."""
    batch = EmbeddingBatch(standard_dataset.embeddings, standard_dataset.embeddings)
    for gamma in (5e-4, 1e-3):
        centroids = initialize_centroids(batch, k=4, seed=4)
        assignment = None
        for _ in range(50):
            assignment = assign(batch, centroids)
            centroids = momentum_update(centroids, assignment, batch, gamma=gamma)
        score = ami(assignment.assigned_cluster, standard_dataset.labels)
        assert score >= 0.9, f"gamma={gamma}: AMI {score:.4f}"
    report("C5 clustering quality")


def test_c6_metric_oracles():
    """Accuracy, AMI, uniformity, and rank correlation match their
    independent oracles."""
    rng = np.random.default_rng(6)
    for classes in (2, 3, 5):
        predicted = rng.integers(0, classes, size=14)
        true = rng.integers(0, classes, size=14)
        assert clustering_accuracy(predicted, true) == pytest.approx(
            accuracy_permutation_oracle(predicted, true))

    true = rng.integers(0, 4, size=20)
    relabeled = np.array([3, 0, 2, 1])[true]
    assert ami(relabeled, true) == pytest.approx(1.0)

    rows = normalize_rows(rng.standard_normal((12, 6)))
    assert uniformity(rows) == pytest.approx(uniformity_oracle(rows), abs=1e-12)

    cosines = [0.1, 0.4, 0.4, 0.6, 0.9, 0.9]
    gold = [0.5, 1.5, 1.5, 3.0, 4.0, 4.5]
    pairs = pair_set_with_cosines(cosines, gold)
    assert spearman(pairs) == pytest.approx(
        spearman_oracle(pairs.predicted_cosines(), gold), abs=1e-12)
    report("C6 metric oracles")


def test_c7_similarity_dynamics(standard_dataset, standard_run):
    """Hard negatives stay more similar than in-batch negatives, and
    positives stay above hard negatives, for almost every training step."""
    result, train_seconds = standard_run
    assert train_seconds < 60.0, f"training took {train_seconds:.1f}s"
    post = [r for r in result.telemetry if r.mean_hard_neg_sim is not None]
    assert len(post) >= 100
    hard_above_inbatch = np.mean(
        [r.mean_hard_neg_sim > r.mean_inbatch_neg_sim for r in post])
    pos_above_hard = np.mean(
        [r.mean_pos_sim > r.mean_hard_neg_sim for r in post])
    assert hard_above_inbatch >= 0.9, f"fraction {hard_above_inbatch:.3f}"
    assert pos_above_hard >= 0.95, f"fraction {pos_above_hard:.3f}"
    report("C7 similarity dynamics")


def test_c8_similarity_ordering(standard_run):
    """Final telemetry: hard negative <= false negative <= positive mean
    similarity (the measured ordering hypothesis)."""
    final = standard_run[0].telemetry[-1]
    assert final.mean_false_neg_sim is not None
    assert final.mean_hard_neg_sim <= final.mean_false_neg_sim + 1e-6
    assert final.mean_false_neg_sim <= final.mean_pos_sim + 1e-6
    report("C8 similarity ordering")


def test_c9_false_negative_precision():
    """Same-cluster mask precision >= 0.8 on the eight-class mixture after
    training."""
    dataset = generate(EIGHT_CLASS_MIXTURE)
    result = train(dataset, default_train_config(k=16))
    metrics = compute_eval_metrics(result.encoder, result.centroids, dataset)
    assert metrics["false_negative_precision"] >= 0.8, metrics
    report("C9 false-negative precision")


def test_c10_ablation_direction(standard_dataset, tmp_path):
    """Across 5 seeds the full configuration's final AMI is at least the
    baseline's, and the sigma sweep emits its three-run report."""
    full_scores, baseline_scores = [], []
    for seed in range(5):
        for scores, use in ((full_scores, True), (baseline_scores, False)):
            result = train(standard_dataset, default_train_config(
                seed=100 + seed, steps=150, use_hard=use, use_bml=use))
            metrics = compute_eval_metrics(result.encoder, result.centroids,
                                           standard_dataset)
            scores.append(metrics["ami"])
    assert np.mean(full_scores) >= np.mean(baseline_scores), (
        full_scores, baseline_scores)

    from clusterns.datasynth import write_dataset

    config_file = tmp_path / "config.yaml"
    data_file = tmp_path / "dataset.tsv"
    write_dataset(data_file, standard_dataset)
    config_file.write_text(f"""\
data:
  path: {data_file}
train:
  steps: 60
  batch_size: 32
  learning_rate: 0.5
  seed: 11
  out_dim: 16
  dropout_rate: 0.1
  cluster:
    k: 8
    gamma: 0.001
    sigma: 0.4
    warmup_cap: 50
""")
    runner = CliRunner()
    result = runner.invoke(main, [
        "sweep", "--config", str(config_file), "--kind", "sigma",
        "--out", str(tmp_path / "sweep")])
    assert result.exit_code == 0, result.output
    rows = (tmp_path / "sweep" / "report.csv").read_text().splitlines()
    assert len(rows) == 4 and [r.split(",")[1] for r in rows[1:]] == ["0.2", "0.4", "0.6"]
    report("C10 ablation direction")


def test_c11_run_determinism(tmp_path):
    """Two CLI training runs with one config produce byte-identical
    telemetry."""
    import hashlib

    config_file = tmp_path / "config.yaml"
    config_file.write_text(f"""\
mixture:
  num_classes: 4
  dim: 16
  samples_per_class: 64
  intra_concentration: 0.1
  min_inter_cosine_gap: 0.8
  seed: 13
data:
  path: {tmp_path / 'data' / 'dataset.tsv'}
train:
  steps: 80
  batch_size: 32
  learning_rate: 0.5
  seed: 11
  out_dim: 16
  dropout_rate: 0.1
  cluster:
    k: 8
    gamma: 0.001
    sigma: 0.4
    warmup_cap: 50
""")
    runner = CliRunner()
    result = runner.invoke(main, [
        "generate", "--config", str(config_file), "--out", str(tmp_path / "data")])
    assert result.exit_code == 0, result.output
    digests = []
    for name in ("r1", "r2"):
        result = runner.invoke(main, [
            "train", "--config", str(config_file), "--out", str(tmp_path / name)])
        assert result.exit_code == 0, result.output
        digests.append(hashlib.sha256(
            (tmp_path / name / "telemetry.csv").read_bytes()).hexdigest())
    assert digests[0] == digests[1]
    report("C11 run determinism")


def test_c12_alignment_uniformity_ranges(standard_dataset, standard_run):
    """Uniformity is non-positive, alignment sits in [0, 4] and equals the
    2 - 2 * mean-cosine identity on evaluated checkpoints."""
    from clusterns.training import encode

    checkpoints = [standard_run[0]]
    baseline = train(standard_dataset, default_train_config(
        steps=100, use_hard=False, use_bml=False))
    checkpoints.append(baseline)
    for result in checkpoints:
        metrics = compute_eval_metrics(result.encoder, result.centroids,
                                       standard_dataset)
        assert metrics["uniformity"] <= 0.0
        assert 0.0 <= metrics["alignment"] <= 4.0
        views = encode(result.encoder, standard_dataset.embeddings, [0, 97])
        mean_cos = float(np.sum(views.anchors * views.positives, axis=1).mean())
        assert metrics["alignment"] == pytest.approx(2.0 - 2.0 * mean_cos, abs=1e-9)
    report("C12 alignment/uniformity ranges")
