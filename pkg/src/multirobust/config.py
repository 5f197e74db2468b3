"""Declarative experiment configuration: JSON schema, overrides, fingerprint.

Parsing is strict: unknown keys anywhere in the document or in a dotted-path
override are rejected rather than silently ignored, and serialize -> parse is
an identity.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from multirobust.attacks import ATTACK_NAMES
from multirobust.data import DATASET_NAMES
from multirobust.models import ARCHS
from multirobust.training import METHODS


@dataclass
class DatasetConfig:
    name: str = "blobs"
    n_train: int = 512
    n_test: int = 256
    channels: int = 1
    height: int = 16
    width: int = 16
    classes: int = 10
    noise_std: float = 0.1
    contrast: float = 0.5  # blobs: smooth-template amplitude
    fragile_amplitude: float = 0.045  # blobs: dense sign-code amplitude
    spot_amplitude: float = 0.35  # blobs: concentrated spot amplitude
    spot_count: int = 6  # blobs: spots per class
    path: str | None = None  # raw-tensor directory when name == "raw"


@dataclass
class AttackConfig:
    name: str = "pgd-linf"
    # None means: use the registry default; the l1/l2 budgets rescale with
    # input dimension d as eps_l1 = (2000/255) * d/3072 and
    # eps_l2 = (128/255) * sqrt(d/3072); eps_linf stays 8/255.
    epsilon: float | None = None
    steps: int | None = None
    step_size: float | None = None
    random_init: bool = True
    sparsity_fraction: float = 0.01
    max_fraction: float = 0.1  # salt-pepper only
    trials: int = 10  # salt-pepper only


@dataclass
class ModelConfig:
    arch: str = "small_cnn"
    generator_hidden: int = 32


@dataclass
class TrainerConfig:
    beta: float = 12.0
    epochs: int = 30
    batch_size: int = 128
    generator_enabled: bool = True
    alpha_meta: float | None = None  # None: reuse the scheduled lr


@dataclass
class OptimizerConfig:
    max_lr: float = 0.21
    momentum: float = 0.9
    weight_decay: float = 5e-4
    phi_momentum: float = 0.0
    phi_weight_decay: float = 0.0


@dataclass
class SeedConfig:
    data: int = 0
    attack: int = 1
    noise: int = 2
    init: int = 3


@dataclass
class ExperimentConfig:
    method: str = "mng_ac"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    attacks: list[AttackConfig] = field(
        default_factory=lambda: [
            AttackConfig(name="pgd-linf"),
            AttackConfig(name="pgd-l1"),
            AttackConfig(name="pgd-l2"),
        ]
    )
    eval_attacks: list[AttackConfig] | None = None  # None: attacks at eval steps
    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    output_dir: str = "runs/experiment"


_NESTED = {
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "trainer": TrainerConfig,
    "optimizer": OptimizerConfig,
    "seeds": SeedConfig,
}


def _from_dict(cls, data, path):
    if not isinstance(data, dict):
        raise ValueError(f"{path or 'config'}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        where = f"{path}.{f.name}" if path else f.name
        if f.name in _NESTED and cls is ExperimentConfig:
            value = _from_dict(_NESTED[f.name], value, where)
        elif f.name in ("attacks", "eval_attacks") and cls is ExperimentConfig:
            if value is not None:
                if not isinstance(value, list):
                    raise ValueError(f"{where}: expected a list")
                value = [_from_dict(AttackConfig, a, f"{where}[{i}]") for i, a in enumerate(value)]
        kwargs[f.name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    config = _from_dict(ExperimentConfig, data, "")
    validate_config(config)
    return config


def config_to_dict(config: ExperimentConfig) -> dict:
    return dataclasses.asdict(config)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(path, config: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(config))
        fh.write("\n")


def canonical_json(config: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(config), sort_keys=True, separators=(", ", ": "), indent=2)


def fingerprint(config: ExperimentConfig) -> str:
    payload = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def validate_config(config: ExperimentConfig) -> None:
    if config.method not in METHODS:
        raise ValueError(f"unknown method {config.method!r}, expected one of {METHODS}")
    if config.dataset.name not in DATASET_NAMES:
        raise ValueError(f"unknown dataset {config.dataset.name!r}")
    if config.dataset.name == "raw" and not config.dataset.path:
        raise ValueError("raw dataset requires dataset.path")
    if config.model.arch not in ARCHS:
        raise ValueError(f"unknown arch {config.model.arch!r}")
    if not config.attacks:
        raise ValueError("attacks must be nonempty")
    if config.method == "adv_single" and len(config.attacks) != 1:
        raise ValueError("adv_single expects exactly one attack")
    for a in list(config.attacks) + list(config.eval_attacks or []):
        if a.name not in ATTACK_NAMES:
            raise ValueError(f"unknown attack {a.name!r}, expected one of {ATTACK_NAMES}")
        if a.epsilon is not None and a.epsilon <= 0:
            raise ValueError(f"{a.name}: epsilon must be positive when given")
        if a.steps is not None and a.steps < 1:
            raise ValueError(f"{a.name}: steps must be >= 1 when given")
        if a.step_size is not None and a.step_size <= 0:
            raise ValueError(f"{a.name}: step_size must be positive when given")
    if config.trainer.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if config.trainer.epochs < 1:
        raise ValueError("epochs must be >= 1")
    if config.trainer.beta < 0:
        raise ValueError("beta must be nonnegative")
    if config.optimizer.max_lr <= 0:
        raise ValueError("max_lr must be positive")


def parse_override(raw: str):
    """Split one ``key.path=value`` override; values parse as JSON, else string."""
    if "=" not in raw:
        raise ValueError(f"override {raw!r} must look like key.path=value")
    key, value = raw.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.strip(), parsed


def apply_override(data: dict, key: str, value) -> None:
    """Apply one dotted-path override to a config dict, schema-checked.

    List elements are addressed by integer segments, e.g. attacks.0.epsilon.
    """
    parts = key.split(".")
    node = data
    cls = ExperimentConfig
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            try:
                idx = int(part)
            except ValueError:
                raise ValueError(f"{key}: {part!r} must be a list index")
            if not (0 <= idx < len(node)):
                raise ValueError(f"{key}: index {idx} out of range")
            if last:
                node[idx] = value
                return
            node = node[idx]
            cls = AttackConfig
            continue
        if cls is not None:
            names = {f.name for f in dataclasses.fields(cls)}
            if part not in names:
                raise ValueError(f"{key}: unknown config key {part!r}")
        if last:
            node[part] = value
            return
        if part not in node or node[part] is None:
            node[part] = [] if part in ("attacks", "eval_attacks") else {}
        node = node[part]
        if part in _NESTED:
            cls = _NESTED[part]
        elif part in ("attacks", "eval_attacks"):
            cls = AttackConfig
        else:
            cls = None
