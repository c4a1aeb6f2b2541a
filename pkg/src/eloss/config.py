"""Experiment configuration: strict schema, materialized defaults, hashing.

A config document has five sections (dataset, model, train, noise,
analysis) under schema id ``eloss-exp-1``.  Parsing rejects unknown keys
at every level and fills every omitted default, so the persisted copy is
complete; the run directory name derives from a hash of that canonical
form, never from wall-clock time.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .datasets import DATASET_NAMES, DEFAULT_SPLIT_SIZES, NOISE_PRESETS, NoiseSpec
from .training import TrainConfig

SCHEMA_VERSION = "eloss-exp-1"


class ConfigError(ValueError):
    """Malformed or contradictory experiment configuration."""


_DATASET_DEFAULTS = {
    "name": "gridmap-conv",
    "seed": 0,
    "train_size": DEFAULT_SPLIT_SIZES["train"],
    "val_size": DEFAULT_SPLIT_SIZES["val"],
    "test_size": DEFAULT_SPLIT_SIZES["test"],
}

_MODEL_DEFAULTS = {"blocks": 3, "width": None, "layers_per_block": 2}

_TRAIN_DEFAULTS = {
    "epochs": 10, "batch_size": 32, "seed": 0,
    "optimizer": "adam", "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
    "eps": 1e-8, "weight_decay": 0.01,
    "alpha": 0.01, "lambda1": 1.0, "lambda2": 0.1,
    "eloss_coverage": 0, "k": 1, "epsilon": 1e-12, "eloss_into_stem": False,
}

_ANALYSIS_DEFAULTS = {"split": "test", "batch_size": 64}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    model: dict
    train: dict
    noise: list = field(default_factory=list)
    analysis: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, "dataset": dict(self.dataset),
                "model": dict(self.model), "train": dict(self.train),
                "noise": [dict(n) for n in self.noise],
                "analysis": dict(self.analysis)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    def train_config(self) -> TrainConfig:
        return TrainConfig(task=self.dataset["name"], **self.train)

    def noise_specs(self) -> list[NoiseSpec]:
        return [NoiseSpec(**entry) for entry in self.noise]

    def split_sizes(self) -> dict:
        return {"train": self.dataset["train_size"],
                "val": self.dataset["val_size"],
                "test": self.dataset["test_size"]}


def _merge_section(name: str, given: dict, defaults: dict) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(given)
    return merged


def parse_experiment_config(doc: dict) -> ExperimentConfig:
    """Validate a config document and materialize every default."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known_top = {"schema", "dataset", "model", "train", "noise", "analysis"}
    unknown = set(doc) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    schema = doc.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema {schema!r}, expected {SCHEMA_VERSION!r}")

    dataset = _merge_section("dataset", doc.get("dataset", {}), _DATASET_DEFAULTS)
    if dataset["name"] not in DATASET_NAMES:
        raise ConfigError(f"unknown dataset {dataset['name']!r}")
    model = _merge_section("model", doc.get("model", {}), _MODEL_DEFAULTS)
    train = _merge_section("train", doc.get("train", {}), _TRAIN_DEFAULTS)
    analysis = _merge_section("analysis", doc.get("analysis", {}), _ANALYSIS_DEFAULTS)

    noise_in = doc.get("noise", [])
    if not isinstance(noise_in, list):
        raise ConfigError("'noise' must be a list")
    noise = []
    for entry in noise_in:
        if isinstance(entry, str):
            if entry not in NOISE_PRESETS:
                raise ConfigError(f"unknown noise preset {entry!r}")
            noise.append({**NOISE_PRESETS[entry], "seed": 0})
        else:
            merged = _merge_section("noise", entry,
                                    {"kind": "gaussian-additive", "ratio": 0.0,
                                     "sigma": 0.0, "seed": 0})
            noise.append(merged)

    cfg = ExperimentConfig(dataset=dataset, model=model, train=train,
                           noise=noise, analysis=analysis)
    try:
        cfg.train_config()
        cfg.noise_specs()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not 0 <= train["eloss_coverage"] <= model["blocks"]:
        raise ConfigError(
            f"eloss_coverage {train['eloss_coverage']} out of 0..{model['blocks']}")
    return cfg


def load_experiment_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_experiment_config(doc)
