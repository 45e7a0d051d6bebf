"""Experiment configuration: dataclasses, YAML loading and dotted-key overrides.

Schema (every key optional; shown with defaults)::

    seed: 0
    target_accuracy: null          # fraction in [0, 1]
    checkpoint_rounds: []          # rounds that get magnitude stats / snapshots
    snapshots: false               # write snapshots/round_<t>.bin at checkpoints
    model:
      hidden: [64]
    data:
      kind: blobs                  # blobs | idx
      n_samples: 2000
      dim: 16
      n_classes: 4
      spread: 0.5
      test_fraction: 0.2           # blobs only
      train_images: null           # idx only (test_* as well)
    partition:
      kind: iid                    # iid | label_shard
      classes_per_client: 2
    train:
      learning_rate: 0.01
      momentum: 0.9
      batch_size: 64
      local_epochs: 1
    protocol:
      n_clients: 10
      total_rounds: 50
      mode: resfed                 # no_compression | compress_weights | compress_gradients | resfed
      warmup_rounds: null          # null -> max(window, 1)
      weighted_aggregation: true
      predictor: {window: 1}
      uplink_compression: {mode: identity, sparsity: 0.0, bits: 1, entropy: huffman}
      downlink_compression: {mode: identity, sparsity: 0.0, bits: 1, entropy: huffman}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml

from .codec import HUFFMAN, IDENTITY, NO_ENTROPY, SPARSE_QUANT, CompressionConfig
from .errors import ConfigError, InvalidConfigError
from .model import TrainConfig
from .predictor import PredictorConfig
from .protocol import MODES, ProtocolConfig

BLOBS, IDX = "blobs", "idx"
IID, LABEL_SHARD = "iid", "label_shard"


@dataclass(frozen=True)
class DataSpec:
    kind: str = BLOBS
    n_samples: int = 2000
    dim: int = 16
    n_classes: int = 4
    spread: float = 0.5
    test_fraction: float = 0.2
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None

    def __post_init__(self):
        if self.kind == IDX and not all((self.train_images, self.train_labels, self.test_images, self.test_labels)):
            raise InvalidConfigError("idx data needs train_images, train_labels, test_images and test_labels")


@dataclass(frozen=True)
class PartitionSpec:
    kind: str = IID
    classes_per_client: int = 2


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: ProtocolConfig = field(default_factory=lambda: ProtocolConfig(n_clients=10, total_rounds=50))
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataSpec = field(default_factory=DataSpec)
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    hidden: tuple[int, ...] = (64,)
    seed: int = 0
    target_accuracy: float | None = None
    checkpoint_rounds: tuple[int, ...] = ()
    snapshots: bool = False

    def __post_init__(self):
        bad = [r for r in self.checkpoint_rounds if not 1 <= r <= self.protocol.total_rounds]
        if bad:
            raise InvalidConfigError(f"checkpoint rounds {bad} outside [1, {self.protocol.total_rounds}]")


# -- schema -----------------------------------------------------------------


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return _is_int(v) or isinstance(v, float)


def _one_of(*choices) -> tuple[Callable[[Any], bool], str]:
    return (lambda v: v in choices), f"one of {list(choices)}"


_POS = (lambda v: v > 0, "> 0")
_NONNEG = (lambda v: v >= 0, ">= 0")
_ANY = (lambda v: True, "")
_COMPRESSION = {
    "mode": ("str", _one_of(IDENTITY, SPARSE_QUANT)),
    "sparsity": ("float", (lambda v: 0 <= v < 1, "in [0, 1)")),
    "bits": ("int", (lambda v: 1 <= v <= 8, "in [1, 8]")),
    "entropy": ("str", _one_of(HUFFMAN, NO_ENTROPY)),
}

# leaf: (type tag, (check, description)); nested dicts are sections
SCHEMA: dict[str, Any] = {
    "seed": ("int", _NONNEG),
    "target_accuracy": ("float?", (lambda v: v is None or 0 <= v <= 1, "in [0, 1]")),
    "checkpoint_rounds": ("int[]", (lambda v: all(r >= 1 for r in v), "rounds >= 1")),
    "snapshots": ("bool", _ANY),
    "model": {"hidden": ("int[]", (lambda v: all(h > 0 for h in v), "positive widths"))},
    "data": {
        "kind": ("str", _one_of(BLOBS, IDX)),
        "n_samples": ("int", _POS),
        "dim": ("int", _POS),
        "n_classes": ("int", (lambda v: v >= 2, ">= 2")),
        "spread": ("float", _POS),
        "test_fraction": ("float", (lambda v: 0 < v < 1, "in (0, 1)")),
        "train_images": ("str?", _ANY),
        "train_labels": ("str?", _ANY),
        "test_images": ("str?", _ANY),
        "test_labels": ("str?", _ANY),
    },
    "partition": {
        "kind": ("str", _one_of(IID, LABEL_SHARD)),
        "classes_per_client": ("int", _POS),
    },
    "train": {
        "learning_rate": ("float", _NONNEG),
        "momentum": ("float", (lambda v: 0 <= v < 1, "in [0, 1)")),
        "batch_size": ("int", _POS),
        "local_epochs": ("int", _POS),
    },
    "protocol": {
        "n_clients": ("int", _POS),
        "total_rounds": ("int", _NONNEG),
        "mode": ("str", _one_of(*MODES)),
        "warmup_rounds": ("int?", (lambda v: v is None or v >= 1, ">= 1")),
        "weighted_aggregation": ("bool", _ANY),
        "predictor": {"window": ("int", _NONNEG)},
        "uplink_compression": dict(_COMPRESSION),
        "downlink_compression": dict(_COMPRESSION),
    },
}


def _type_ok(tag: str, v) -> bool:
    if tag.endswith("?"):
        return v is None or _type_ok(tag[:-1], v)
    if tag == "int":
        return _is_int(v)
    if tag == "float":
        return _is_num(v)
    if tag == "str":
        return isinstance(v, str)
    if tag == "bool":
        return isinstance(v, bool)
    if tag == "int[]":
        return isinstance(v, list) and all(_is_int(x) for x in v)
    raise AssertionError(tag)


# -- YAML with line numbers -------------------------------------------------


def _node_to_python(node, path: str, lines: dict[str, int]):
    """Plain data from a composed YAML node, recording 1-based lines of every mapping key."""
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = yaml.safe_load(yaml.serialize(key_node)) if not isinstance(key_node, yaml.ScalarNode) else key_node.value
            dotted = f"{path}.{key}" if path else str(key)
            if key in out:
                raise ConfigError(dotted, "duplicate key", key_node.start_mark.line + 1)
            lines[dotted] = key_node.start_mark.line + 1
            out[key] = _node_to_python(value_node, dotted, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_node_to_python(n, f"{path}[{i}]", lines) for i, n in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def load_yaml(text: str) -> tuple[dict, dict[str, int]]:
    lines: dict[str, int] = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<document>", f"not valid YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from exc
    if root is None:
        return {}, lines
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("<document>", "top level must be a mapping", root.start_mark.line + 1)
    return _node_to_python(root, "", lines), lines


def parse_override(item: str) -> tuple[str, Any]:
    """``a.b.c=value`` with ``value`` read as a YAML scalar or flow collection."""
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(item, "override must look like dotted.key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(key, f"cannot parse override value {raw!r}") from exc
    return key, value


def _set_dotted(doc: dict, key: str, value) -> None:
    parts = key.split(".")
    node, schema = doc, SCHEMA
    for i, part in enumerate(parts):
        if not isinstance(schema, dict) or part not in schema:
            raise ConfigError(key, "unknown key")
        schema = schema[part]
        if i == len(parts) - 1:
            node[part] = value
        else:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(".".join(parts[: i + 1]), "expected a mapping")
            node = child


def _check(doc: dict, schema: dict, path: str, lines: dict[str, int]) -> None:
    for key, value in doc.items():
        dotted = f"{path}.{key}" if path else str(key)
        line = lines.get(dotted)
        if key not in schema:
            raise ConfigError(dotted, "unknown key", line)
        entry = schema[key]
        if isinstance(entry, dict):
            if not isinstance(value, dict):
                raise ConfigError(dotted, "expected a mapping", line)
            _check(value, entry, dotted, lines)
            continue
        tag, (ok, desc) = entry
        if not _type_ok(tag, value):
            raise ConfigError(dotted, f"expected {tag}, got {type(value).__name__} {value!r}", line)
        if not ok(value):
            raise ConfigError(dotted, f"must be {desc}, got {value!r}", line)


def _compression(section: dict) -> CompressionConfig:
    return CompressionConfig(**section)


def build_config(doc: dict, lines: dict[str, int] | None = None) -> ExperimentConfig:
    """Validate a plain nested dict against the schema and build the config."""
    lines = lines or {}
    _check(doc, SCHEMA, "", lines)
    get = lambda section: dict(doc.get(section, {}))  # noqa: E731
    proto = get("protocol")
    predictor = PredictorConfig(**proto.pop("predictor", {}))
    up = _compression(proto.pop("uplink_compression", {}))
    down = _compression(proto.pop("downlink_compression", {}))
    proto.setdefault("n_clients", 10)
    proto.setdefault("total_rounds", 50)

    def build(section: str, fn):
        try:
            return fn()
        except (InvalidConfigError, TypeError) as exc:
            raise ConfigError(section, str(exc), lines.get(section)) from exc

    protocol = build(
        "protocol",
        lambda: ProtocolConfig(predictor=predictor, uplink_compression=up, downlink_compression=down, **proto),
    )
    train = build("train", lambda: TrainConfig(seed=doc.get("seed", 0), **get("train")))
    data = build("data", lambda: DataSpec(**get("data")))
    partition = PartitionSpec(**get("partition"))
    hidden = tuple(get("model").get("hidden", (64,)))
    return build(
        "checkpoint_rounds",
        lambda: ExperimentConfig(
            protocol=protocol,
            train=train,
            data=data,
            partition=partition,
            hidden=hidden,
            seed=doc.get("seed", 0),
            target_accuracy=doc.get("target_accuracy"),
            checkpoint_rounds=tuple(doc.get("checkpoint_rounds", ())),
            snapshots=doc.get("snapshots", False),
        ),
    )


def parse_config(path=None, overrides=()) -> ExperimentConfig:
    """Load ``path`` (or start from defaults), apply ``key=value`` overrides, validate."""
    doc, lines = {}, {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError("--config", f"file not found: {path}")
        doc, lines = load_yaml(path.read_text())
    for item in overrides:
        key, value = item if isinstance(item, tuple) else parse_override(item)
        _set_dotted(doc, key, value)
        lines.pop(key, None)
    return build_config(doc, lines)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Inverse of :func:`build_config`; feeding the result back gives an equal config."""
    p = config.protocol
    return {
        "seed": config.seed,
        "target_accuracy": config.target_accuracy,
        "checkpoint_rounds": list(config.checkpoint_rounds),
        "snapshots": config.snapshots,
        "model": {"hidden": list(config.hidden)},
        "data": dataclasses.asdict(config.data),
        "partition": dataclasses.asdict(config.partition),
        "train": {
            "learning_rate": config.train.learning_rate,
            "momentum": config.train.momentum,
            "batch_size": config.train.batch_size,
            "local_epochs": config.train.local_epochs,
        },
        "protocol": {
            "n_clients": p.n_clients,
            "total_rounds": p.total_rounds,
            "mode": p.mode,
            "warmup_rounds": p.warmup_rounds,
            "weighted_aggregation": p.weighted_aggregation,
            "predictor": {"window": p.predictor.window},
            "uplink_compression": dataclasses.asdict(p.uplink_compression),
            "downlink_compression": dataclasses.asdict(p.downlink_compression),
        },
    }


def with_overrides(config: ExperimentConfig, overrides: dict[str, Any]) -> ExperimentConfig:
    """Copy of ``config`` with ``{"dotted.key": value}`` applied and revalidated."""
    doc = config_to_dict(config)
    for key, value in overrides.items():
        _set_dotted(doc, key, value)
    return build_config(doc)
