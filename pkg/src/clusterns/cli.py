"""Command-line entry point: generate / train / eval / sweep.

Every command reads one YAML config, writes its artifacts into a run
directory, and finishes by atomically writing a manifest (config
snapshot, seed, artifact digests, timestamps) from which the run can be
reproduced. Exit codes: 0 success, 2 configuration error, 3 divergence
during training, 4 I/O error.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .clustering import assign, spherical_kmeans, write_centroids
from .config import (
    build_mixture_spec,
    build_train_config,
    config_snapshot,
    dataset_path,
    load_config,
)
from .datasynth import generate, read_dataset, read_scored_pairs, write_dataset
from .embedding import EmbeddingBatch, normalize_rows
from .errors import (
    ClusterNSError,
    ConfigError,
    DivergenceError,
    EmptyInputError,
    ParseError,
    ShapeError,
)
from .evaluation import (
    ScoredPairSet,
    alignment,
    ami,
    clustering_accuracy,
    spearman,
    uniformity,
)
from .negatives import false_negative_precision
from .training import (
    encode,
    load_checkpoint,
    save_checkpoint,
    train,
    write_telemetry,
)

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

NOT_EVALUATED = "not_evaluated"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: Path, command: str, seed, snapshot: dict,
                   artifacts: dict, started_at: str) -> Path:
    """Atomically write the run manifest next to the artifacts."""
    manifest = {
        "tool": "clusterns",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": snapshot,
        "artifacts": {
            name: {"path": str(path), "sha256": _sha256(Path(path))}
            for name, path in artifacts.items()
        },
        "started_at": started_at,
        "finished_at": _utc_now(),
    }
    path = out_dir / "manifest.json"
    tmp = out_dir / "manifest.json.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except DivergenceError as exc:
        _fail(EXIT_DIVERGENCE, str(exc))
    except (ParseError, EmptyInputError, OSError) as exc:
        _fail(EXIT_IO, str(exc))
    except ClusterNSError as exc:
        _fail(EXIT_CONFIG, str(exc))


@click.group()
@click.version_option(version=__version__)
def main():
    """Clustering-aware negative sampling experiments at desk scale."""


def _generate_impl(config_path: str, seed, out: str):
    started = _utc_now()
    cfg = load_config(config_path)
    spec = build_mixture_spec(cfg, seed_override=seed)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = generate(spec)
    data_file = out_dir / "dataset.tsv"
    write_dataset(data_file, dataset)
    write_manifest(
        out_dir, "generate", spec.seed, config_snapshot(cfg, mixture=spec),
        {"dataset": data_file}, started,
    )
    click.echo(f"wrote {len(dataset)} samples to {data_file}")


@main.command("generate")
@click.option("--config", "config_path", required=True, type=click.Path(), help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override the mixture seed.")
@click.option("--out", default="runs/generate", show_default=True, help="Output directory.")
def cmd_generate(config_path, seed, out):
    """Generate a labeled synthetic dataset."""
    _guarded(_generate_impl, config_path, seed, out)


def _train_impl(config_path: str, seed, out: str, resume):
    started = _utc_now()
    cfg = load_config(config_path)
    train_cfg = build_train_config(cfg, seed_override=seed)
    data_file = dataset_path(cfg)
    dataset = read_dataset(data_file)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    resume_state = load_checkpoint(resume) if resume else None
    result = train(dataset, train_cfg, resume=resume_state)

    telemetry_file = out_dir / "telemetry.csv"
    write_telemetry(telemetry_file, result.telemetry)
    checkpoint_file = out_dir / "checkpoint.bin"
    save_checkpoint(checkpoint_file, result.encoder, result.centroids, train_cfg.steps)
    centroid_file = out_dir / "centroids.txt"
    write_centroids(centroid_file, result.centroids)
    write_manifest(
        out_dir, "train", train_cfg.seed, config_snapshot(cfg, train=train_cfg),
        {"telemetry": telemetry_file, "checkpoint": checkpoint_file,
         "centroids": centroid_file, "dataset": Path(data_file)},
        started,
    )
    click.echo(
        f"trained {train_cfg.steps} steps; telemetry rows: {len(result.telemetry)}; "
        f"centroids initialized: {result.centroids.initialized}"
    )


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(), help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override the training seed.")
@click.option("--out", default="runs/train", show_default=True, help="Output directory.")
@click.option("--resume", type=click.Path(), default=None, help="Checkpoint to resume from.")
def cmd_train(config_path, seed, out, resume):
    """Train the toy encoder with clustering-aware negative sampling."""
    _guarded(_train_impl, config_path, seed, out, resume)


def compute_eval_metrics(encoder, centroids, dataset, pairs=None,
                         eval_seed: int = 0, positive_threshold: float = 4.0) -> dict:
    """The metric battery for one checkpoint on one labeled dataset."""
    if dataset.dim != encoder.d_in:
        raise ShapeError(
            f"dataset dimension {dataset.dim} does not match encoder input {encoder.d_in}"
        )
    clean = normalize_rows(dataset.embeddings @ encoder.weight)
    views = encode(encoder, dataset.embeddings, [eval_seed, 97])
    metrics = {
        "alignment": alignment(views.anchors, views.positives),
        "uniformity": uniformity(clean),
    }
    predicted = spherical_kmeans(clean, dataset.num_classes, seed=eval_seed)
    metrics["ami"] = ami(predicted, dataset.labels)
    metrics["clustering_accuracy"] = clustering_accuracy(predicted, dataset.labels)

    if centroids is not None and centroids.initialized:
        batch = EmbeddingBatch(clean, clean)
        assignment = assign(batch, centroids)
        same_cluster = (
            assignment.assigned_cluster[:, None] == assignment.assigned_cluster[None, :]
        )
        np.fill_diagonal(same_cluster, False)
        metrics["false_negative_precision"] = false_negative_precision(
            same_cluster, dataset.labels
        )
    else:
        metrics["false_negative_precision"] = NOT_EVALUATED

    if pairs is not None:
        if pairs.embeddings_a.shape[1] != encoder.d_in:
            raise ShapeError(
                f"pair dimension {pairs.embeddings_a.shape[1]} does not match "
                f"encoder input {encoder.d_in}"
            )
        encoded_a = normalize_rows(pairs.embeddings_a @ encoder.weight)
        encoded_b = normalize_rows(pairs.embeddings_b @ encoder.weight)
        scored = ScoredPairSet(encoded_a, encoded_b, pairs.gold_scores)
        metrics["spearman"] = spearman(scored)
        pos_a, pos_b = scored.positive_pairs(positive_threshold)
        if pos_a.shape[0]:
            metrics["alignment_scored"] = alignment(pos_a, pos_b)
        else:
            metrics["alignment_scored"] = NOT_EVALUATED
    else:
        metrics["spearman"] = NOT_EVALUATED
        metrics["alignment_scored"] = NOT_EVALUATED
    return metrics


def write_metrics_report(out_dir: Path, metrics: dict):
    """Emit the flat key-value report as text and CSV."""
    txt = out_dir / "metrics.txt"
    csv_file = out_dir / "metrics.csv"
    with open(txt, "w", encoding="ascii") as fh:
        for key, value in metrics.items():
            fh.write(f"{key} = {value}\n")
    with open(csv_file, "w", encoding="ascii", newline="") as fh:
        fh.write("metric,value\n")
        for key, value in metrics.items():
            fh.write(f"{key},{value}\n")
    return txt, csv_file


def _eval_impl(checkpoint, dataset_file, pairs_file, out, eval_seed,
               positive_threshold, config_path=None):
    started = _utc_now()
    if config_path:
        section = load_config(config_path).get("eval") or {}
        if eval_seed is None:
            eval_seed = int(section.get("seed", 0))
        if positive_threshold is None:
            positive_threshold = float(section.get("positive_threshold", 4.0))
    eval_seed = 0 if eval_seed is None else eval_seed
    positive_threshold = 4.0 if positive_threshold is None else positive_threshold
    encoder, centroids, step = load_checkpoint(checkpoint)
    dataset = read_dataset(dataset_file)
    pairs = read_scored_pairs(pairs_file) if pairs_file else None
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = compute_eval_metrics(
        encoder, centroids, dataset, pairs,
        eval_seed=eval_seed, positive_threshold=positive_threshold,
    )
    txt, csv_file = write_metrics_report(out_dir, metrics)
    write_manifest(
        out_dir, "eval", eval_seed,
        {"checkpoint": str(checkpoint), "checkpoint_step": step,
         "dataset": str(dataset_file),
         "pairs": str(pairs_file) if pairs_file else None,
         "positive_threshold": positive_threshold},
        {"metrics_txt": txt, "metrics_csv": csv_file}, started,
    )
    for key, value in metrics.items():
        click.echo(f"{key} = {value}")


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(), help="Checkpoint file from train.")
@click.option("--dataset", "dataset_file", required=True, type=click.Path(), help="Labeled dataset file.")
@click.option("--pairs", "pairs_file", type=click.Path(), default=None,
              help="Optional scored-pair file for rank correlation.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Optional YAML config; its eval section supplies defaults.")
@click.option("--out", default="runs/eval", show_default=True, help="Output directory.")
@click.option("--seed", "eval_seed", type=int, default=None,
              help="Seed for evaluation-time clustering and views (default 0).")
@click.option("--positive-threshold", type=float, default=None,
              help="Gold score above which a pair counts as positive (default 4.0).")
def cmd_eval(checkpoint, dataset_file, pairs_file, config_path, out, eval_seed,
             positive_threshold):
    """Evaluate a checkpoint: alignment, uniformity, AMI, accuracy, precision."""
    _guarded(_eval_impl, checkpoint, dataset_file, pairs_file, out, eval_seed,
             positive_threshold, config_path)


ABLATION_VARIANTS = (
    # name, use_hard_negatives, use_bml, negative_mode
    ("full", True, True, "standard"),
    ("no_false_negative", True, False, "standard"),
    ("no_hard_negative", False, True, "standard"),
    ("harder_negative", True, True, "harder"),
    ("random_clusters", True, True, "random"),
    ("baseline", False, False, "standard"),
)

SIGMA_SWEEP = (0.2, 0.4, 0.6)


def _sweep_impl(config_path, kind, seed, out):
    import dataclasses

    started = _utc_now()
    cfg = load_config(config_path)
    base = build_train_config(cfg, seed_override=seed)
    dataset = read_dataset(dataset_path(cfg))
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if kind == "ablation":
        variants = [
            (name, dataclasses.replace(
                base,
                negative_mode=mode,
                loss=dataclasses.replace(base.loss, use_hard_negatives=hard, use_bml=use_bml),
            ))
            for name, hard, use_bml, mode in ABLATION_VARIANTS
        ]
    elif kind == "sigma":
        variants = [
            (f"sigma_{value}", dataclasses.replace(
                base, cluster=dataclasses.replace(base.cluster, sigma=value)))
            for value in SIGMA_SWEEP
        ]
    else:
        raise ConfigError(f"unknown sweep kind {kind!r}")

    report_rows = []
    artifacts = {}
    for name, variant_cfg in variants:
        run_dir = out_dir / name
        run_dir.mkdir(parents=True, exist_ok=True)
        result = train(dataset, variant_cfg)
        telemetry_file = run_dir / "telemetry.csv"
        write_telemetry(telemetry_file, result.telemetry)
        checkpoint_file = run_dir / "checkpoint.bin"
        save_checkpoint(checkpoint_file, result.encoder, result.centroids, variant_cfg.steps)
        metrics = compute_eval_metrics(result.encoder, result.centroids, dataset)
        final = result.telemetry[-1]
        report_rows.append({
            "run": name,
            "sigma": variant_cfg.cluster.sigma,
            "use_hard_negatives": variant_cfg.loss.use_hard_negatives,
            "use_bml": variant_cfg.loss.use_bml,
            "negative_mode": variant_cfg.negative_mode,
            "final_mean_hard_neg_sim": final.mean_hard_neg_sim,
            "final_total": final.total,
            "ami": metrics["ami"],
            "clustering_accuracy": metrics["clustering_accuracy"],
        })
        artifacts[f"{name}/telemetry"] = telemetry_file
        artifacts[f"{name}/checkpoint"] = checkpoint_file

    report_csv = out_dir / "report.csv"
    header = list(report_rows[0])
    with open(report_csv, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in report_rows:
            fh.write(",".join("" if row[k] is None else str(row[k]) for k in header) + "\n")
    report_txt = out_dir / "report.txt"
    with open(report_txt, "w", encoding="ascii") as fh:
        for row in report_rows:
            fh.write("  ".join(f"{k}={row[k]}" for k in header) + "\n")
    artifacts["report"] = report_csv
    write_manifest(out_dir, f"sweep:{kind}", base.seed,
                   config_snapshot(cfg, train=base), artifacts, started)
    click.echo(f"swept {len(variants)} runs; report at {report_csv}")


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(), help="YAML config file.")
@click.option("--kind", type=click.Choice(["ablation", "sigma"]), default="ablation",
              show_default=True, help="Which sweep to run.")
@click.option("--seed", type=int, default=None, help="Override the training seed.")
@click.option("--out", default="runs/sweep", show_default=True, help="Output directory.")
def cmd_sweep(config_path, kind, seed, out):
    """Run the ablation grid or the similarity-threshold sweep."""
    _guarded(_sweep_impl, config_path, kind, seed, out)


if __name__ == "__main__":
    main()
