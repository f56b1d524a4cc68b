"""YAML experiment configuration: one file, sections per config type.

Sections mirror the config dataclasses: ``mixture`` for the data
generator, ``train`` (with nested ``cluster`` and ``loss``) for training,
and optional ``data``/``eval`` entries for file paths. Scalar values can
be overridden from the command line; the manifest snapshots the merged
result so a run can be reproduced from its manifest alone.
"""

from __future__ import annotations

from dataclasses import asdict

import yaml

from .clustering import ClusterConfig
from .datasynth import MixtureSpec
from .errors import ConfigError
from .losses import LossConfig
from .training import TrainConfig

_MIXTURE_FIELDS = {
    "num_classes": int,
    "dim": int,
    "samples_per_class": int,
    "intra_concentration": float,
    "min_inter_cosine_gap": float,
    "seed": int,
}
_TRAIN_FIELDS = {
    "steps": int,
    "batch_size": int,
    "learning_rate": float,
    "seed": int,
    "telemetry_every": int,
    "out_dim": int,
    "dropout_rate": float,
    "negative_mode": str,
}
_CLUSTER_FIELDS = {
    "k": int,
    "gamma": float,
    "sigma": float,
    "warmup_cap": int,
    "init_mode": str,
}
_LOSS_FIELDS = {
    "tau": float,
    "mu": float,
    "lambda_bml": float,
    "alpha": float,
    "beta": float,
    "use_hard_negatives": bool,
    "use_bml": bool,
}
_TRAIN_DEFAULTS = {"telemetry_every", "out_dim", "dropout_rate", "negative_mode"}
_LOSS_ALL_DEFAULT = set(_LOSS_FIELDS)


def load_config(path) -> dict:
    """Parse the YAML config file into a plain mapping."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return raw


def _section(cfg: dict, name: str, required: bool) -> dict:
    value = cfg.get(name)
    if value is None:
        if required:
            raise ConfigError("section is missing", field=name)
        return {}
    if not isinstance(value, dict):
        raise ConfigError("section must be a mapping", field=name)
    return value


def _coerce(section: dict, prefix: str, fields: dict, optional=(), subsections=()) -> dict:
    out = {}
    for key, value in section.items():
        if key not in fields and key not in subsections:
            raise ConfigError("unknown field", field=f"{prefix}.{key}")
    for key, caster in fields.items():
        if key not in section:
            if key in optional:
                continue
            raise ConfigError("required field is missing", field=f"{prefix}.{key}")
        value = section[key]
        try:
            if caster is bool:
                if not isinstance(value, bool):
                    raise ValueError("expected true/false")
                out[key] = value
            elif caster is str:
                out[key] = str(value)
            else:
                out[key] = caster(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value {value!r} ({exc})", field=f"{prefix}.{key}")
    return out


def build_mixture_spec(cfg: dict, seed_override=None) -> MixtureSpec:
    section = _section(cfg, "mixture", required=True)
    values = _coerce(section, "mixture", _MIXTURE_FIELDS)
    if seed_override is not None:
        values["seed"] = int(seed_override)
    return MixtureSpec(**values)


def build_train_config(cfg: dict, seed_override=None) -> TrainConfig:
    section = _section(cfg, "train", required=True)
    values = _coerce(
        section, "train", _TRAIN_FIELDS,
        optional=_TRAIN_DEFAULTS, subsections=("cluster", "loss"),
    )
    cluster = _coerce(
        _section(section, "cluster", required=True), "train.cluster", _CLUSTER_FIELDS,
        optional={"init_mode"},
    )
    loss = _coerce(
        _section(section, "loss", required=False), "train.loss", _LOSS_FIELDS,
        optional=_LOSS_ALL_DEFAULT,
    )
    if seed_override is not None:
        values["seed"] = int(seed_override)
    return TrainConfig(cluster=ClusterConfig(**cluster), loss=LossConfig(**loss), **values)


def dataset_path(cfg: dict) -> str:
    section = _section(cfg, "data", required=True)
    path = section.get("path")
    if not path:
        raise ConfigError("required field is missing", field="data.path")
    return str(path)


def config_snapshot(cfg: dict, mixture=None, train=None) -> dict:
    """The merged configuration actually used, for the manifest."""
    snapshot = {k: v for k, v in cfg.items()}
    if mixture is not None:
        snapshot["mixture"] = asdict(mixture)
    if train is not None:
        train_dict = asdict(train)
        snapshot["train"] = train_dict
    return snapshot
