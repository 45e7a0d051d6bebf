"""Experiment orchestration and measurement.

All bit counts are exact serialized sizes in bits. "Mb" in reports means
10**6 bits.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .codec import DOWNLINK, UPLINK
from .config import (
    BLOBS,
    IID,
    ExperimentConfig,
    config_to_dict,
    with_overrides,
)
from .data import Dataset, make_blobs, partition_iid, partition_label_shard, read_idx
from .errors import FormatError, InvalidConfigError
from .model import MlpModel, evaluate, gradient
from .params import ParamVector, Segment
from .protocol import RESFED, ClientState, RoundMessageLog, ServerState, run

__all__ = [
    "ExperimentConfig",
    "RoundRecord",
    "RunResult",
    "Quantiles",
    "run_experiment",
    "bitsaving_rate",
    "volume_to_target",
    "magnitude_stats",
    "memory_footprint",
    "sweep",
    "mode_label_overrides",
    "write_outputs",
    "records_to_csv",
    "write_snapshot",
    "read_snapshot",
]

MEGABIT = 10**6


class Quantiles(NamedTuple):
    p50: float
    p90: float
    max: float


@dataclass(frozen=True)
class RoundRecord:
    round: int
    uplink_bits: tuple[int, ...]  # per client, header + payload
    downlink_bits: tuple[int, ...]
    test_accuracy: float
    train_loss: float
    uplink_cr: float  # 32 V K / uplink payload bits
    downlink_cr: float
    residual: Quantiles  # |uplink vector before compression|, pooled over clients

    @property
    def uplink_total(self) -> int:
        return sum(self.uplink_bits)

    @property
    def downlink_total(self) -> int:
        return sum(self.downlink_bits)

    def bits(self, direction: int) -> int:
        return self.uplink_total if direction == UPLINK else self.downlink_total


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list[RoundRecord]
    model: MlpModel
    checkpoints: dict[int, dict[str, Quantiles]] = field(default_factory=dict)

    def summary(self) -> dict:
        last = self.records[-1] if self.records else None
        up = sum(r.uplink_total for r in self.records)
        down = sum(r.downlink_total for r in self.records)
        target = self.config.target_accuracy
        reached = {}
        if target is not None and self.records:
            for name, direction in (("uplink", UPLINK), ("downlink", DOWNLINK)):
                reached[name] = volume_to_target(self.records, target, direction)
        return {
            "n_params": len(self.model.params),
            "rounds": len(self.records),
            "final_test_accuracy": last.test_accuracy if last else None,
            "final_train_loss": last.train_loss if last else None,
            "uplink_bits": up,
            "downlink_bits": down,
            "total_bits": up + down,
            "total_Mb": (up + down) / MEGABIT,
            "mean_uplink_cr": _mean([r.uplink_cr for r in self.records]),
            "mean_downlink_cr": _mean([r.downlink_cr for r in self.records]),
            "target_accuracy": target,
            "bits_to_target": reached or None,
            "checkpoints": {
                str(t): {name: q._asdict() for name, q in stats.items()} for t, stats in sorted(self.checkpoints.items())
            },
        }


def _mean(xs):
    return float(np.mean(xs)) if xs else None


# -- metrics ----------------------------------------------------------------


def bitsaving_rate(baseline_bits: float, method_bits: float) -> float:
    """Fraction of the baseline volume saved: ``1 - method / baseline``."""
    if not baseline_bits > 0:
        raise InvalidConfigError(f"baseline volume must be positive, got {baseline_bits}")
    return 1.0 - method_bits / baseline_bits


def volume_to_target(records: Sequence[RoundRecord], target_accuracy: float, direction: int) -> int | None:
    """Cumulative bits up to and including the first round reaching ``target_accuracy``; None if never."""
    if not records:
        raise InvalidConfigError("no round records")
    total = 0
    for r in records:
        total += r.bits(direction)
        if r.test_accuracy >= target_accuracy:
            return total
    return None


def _quantiles(values: np.ndarray) -> Quantiles:
    mags = np.abs(np.asarray(values, dtype=np.float64))
    if mags.size == 0:
        raise InvalidConfigError("cannot take quantiles of an empty vector")
    p50, p90 = np.percentile(mags, [50, 90])
    return Quantiles(float(p50), float(p90), float(mags.max()))


def magnitude_stats(vectors: Mapping[str, ParamVector | np.ndarray]) -> dict[str, Quantiles]:
    """p50 / p90 / max of absolute values, per name."""
    if not vectors:
        raise InvalidConfigError("no vectors given")
    return {name: _quantiles(getattr(v, "values", v)) for name, v in vectors.items()}


def memory_footprint(n_params: int, window: int, n_clients: int) -> tuple[int, int]:
    """Bits to cache two float32 trajectories of ``window`` models: (per client, server)."""
    if n_params <= 0 or n_clients <= 0 or window < 0:
        raise InvalidConfigError("need n_params > 0, n_clients > 0, window >= 0")
    client = 2 * 32 * n_params * window
    return client, client * n_clients


# -- running ----------------------------------------------------------------


def build_data(config: ExperimentConfig) -> tuple[list[Dataset], Dataset]:
    """Client shards and the held-out test set."""
    source = config.data
    if source.kind == BLOBS:
        full = make_blobs(source.n_samples, source.dim, source.n_classes, source.spread, config.seed)
        train, test = full.split(source.test_fraction)
    else:
        train = read_idx(source.train_images, source.train_labels, source.n_classes)
        test = read_idx(source.test_images, source.test_labels, source.n_classes)
    n = config.protocol.n_clients
    if config.partition.kind == IID:
        shards = partition_iid(train, n, config.seed)
    else:
        shards = partition_label_shard(train, n, config.partition.classes_per_client, config.seed)
    return shards, test


def layer_sizes(config: ExperimentConfig, test: Dataset) -> tuple[int, ...]:
    return (test.dim, *config.hidden, test.n_classes)


def _cr(n_params: int, records, payload_bits: int) -> float:
    return 32 * n_params * len(records) / payload_bits if payload_bits else float("inf")


def _record(log: RoundMessageLog, model: MlpModel, test: Dataset, train: Dataset) -> RoundRecord:
    acc, _ = evaluate(model, test)
    _, loss = evaluate(model, train)
    n = len(model.params)
    pooled = np.concatenate([q.values for q in log.uplink_quantities])
    return RoundRecord(
        round=log.round,
        uplink_bits=tuple(r.bits.total for r in log.uplink),
        downlink_bits=tuple(r.bits.total for r in log.downlink),
        test_accuracy=float(acc),
        train_loss=float(loss),
        uplink_cr=_cr(n, log.uplink, log.payload_bits(UPLINK)),
        downlink_cr=_cr(n, log.downlink, log.payload_bits(DOWNLINK)),
        residual=_quantiles(pooled),
    )


def checkpoint_vectors(log: RoundMessageLog, model: MlpModel, train: Dataset) -> dict[str, ParamVector]:
    """Global weights, the full-batch gradient there, and this round's uplink vectors (one per client)."""
    out = {"weight": model.params, "gradient": gradient(model, train)}
    for i, q in enumerate(log.uplink_quantities):
        out[f"uplink.{i}"] = q
    return out


def uplink_label(mode: str, raw_uplink: bool) -> str:
    """Name for the uplink vector: ``residual`` once resfed stops sending raw weights."""
    return "residual" if mode == RESFED and not raw_uplink else "uplink"


def checkpoint_stats(vectors: Mapping[str, ParamVector], label: str) -> dict[str, Quantiles]:
    uplink = np.concatenate([v.values for k, v in vectors.items() if k.startswith("uplink.")])
    return magnitude_stats({"weight": vectors["weight"], "gradient": vectors["gradient"], label: uplink})


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    on_round: Callable[[RoundMessageLog, ServerState, list[ClientState]], None] | None = None,
) -> RunResult:
    """Build data, run the protocol, evaluate the global model after every round."""
    shards, test = build_data(config)
    train_all = Dataset.concat(shards)
    sizes = layer_sizes(config, test)
    records: list[RoundRecord] = []
    checkpoints: dict[int, dict[str, Quantiles]] = {}
    wanted = set(config.checkpoint_rounds)
    snap_dir = Path(out_dir) / "snapshots" if out_dir is not None and config.snapshots else None

    def observe(log, server, clients):
        model = MlpModel(sizes, server.global_model)
        records.append(_record(log, model, test, train_all))
        if log.round in wanted:
            vectors = checkpoint_vectors(log, model, train_all)
            label = uplink_label(config.protocol.mode, config.protocol.raw_uplink(log.round))
            checkpoints[log.round] = checkpoint_stats(vectors, label)
            if snap_dir is not None:
                write_snapshot(snap_dir / f"round_{log.round}.bin", vectors)
        if on_round is not None:
            on_round(log, server, clients)

    model, _ = run(config.protocol, shards, config.train, sizes, config.seed, on_round=observe)
    result = RunResult(config, records, model, checkpoints)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


# -- serialization ----------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def record_row(r: RoundRecord) -> dict[str, str]:
    row = {
        "round": str(r.round),
        "uplink_bits": str(r.uplink_total),
        "downlink_bits": str(r.downlink_total),
        "test_accuracy": _fmt(r.test_accuracy),
        "train_loss": _fmt(r.train_loss),
        "uplink_cr": _fmt(r.uplink_cr),
        "downlink_cr": _fmt(r.downlink_cr),
        "residual_p50": _fmt(r.residual.p50),
        "residual_p90": _fmt(r.residual.p90),
        "residual_max": _fmt(r.residual.max),
    }
    for i, b in enumerate(r.uplink_bits):
        row[f"uplink_bits_client{i}"] = str(b)
    for i, b in enumerate(r.downlink_bits):
        row[f"downlink_bits_client{i}"] = str(b)
    return row


def records_to_csv(records: Sequence[RoundRecord], extra: Mapping[str, str] | None = None) -> str:
    """One row per round; ``extra`` columns (e.g. a series label) go first."""
    buf = io.StringIO()
    writer = None
    for r in records:
        row = {**(extra or {}), **record_row(r)}
        if writer is None:
            writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
            writer.writeheader()
        writer.writerow(row)
    return buf.getvalue()


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_outputs(result: RunResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rounds.csv").write_text(records_to_csv(result.records))
    summary = {"config": config_to_dict(result.config), "units": {"bits": "bits", "Mb": "1e6 bits"}}
    summary.update(result.summary())
    (out / "summary.json").write_text(dumps_json(summary))


_MANIFEST_LEN = struct.Struct("<I")


def write_snapshot(path: str | Path, vectors: Mapping[str, ParamVector]) -> None:
    """Named vectors as little-endian float32, preceded by a length-prefixed JSON segment manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    segments, offset = [], 0
    for name, v in vectors.items():
        segments.append({"name": name, "offset": offset, "length": len(v)})
        offset += len(v)
    manifest = json.dumps({"segments": segments}, sort_keys=True).encode()
    body = b"".join(np.asarray(v.values, dtype="<f4").tobytes() for v in vectors.values())
    path.write_bytes(_MANIFEST_LEN.pack(len(manifest)) + manifest + body)


def read_snapshot(path: str | Path) -> dict[str, ParamVector]:
    raw = Path(path).read_bytes()
    if len(raw) < _MANIFEST_LEN.size:
        raise FormatError(f"{path}: truncated manifest length", len(raw))
    (n,) = _MANIFEST_LEN.unpack_from(raw, 0)
    start = _MANIFEST_LEN.size
    if len(raw) < start + n:
        raise FormatError(f"{path}: truncated manifest", len(raw))
    try:
        segments = [Segment(**s) for s in json.loads(raw[start : start + n])["segments"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: unreadable manifest ({exc})", start) from exc
    body = raw[start + n :]
    total = sum(s.length for s in segments)
    if len(body) != 4 * total:
        raise FormatError(f"{path}: body holds {len(body)} bytes, manifest needs {4 * total}", start + n)
    values = np.frombuffer(body, dtype="<f4").astype(np.float32)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FormatError(f"{path}: non-finite value", start + n + 4 * int(bad[0]))
    return {s.name: ParamVector(values[s.offset : s.offset + s.length]) for s in segments}


# -- sweeps -----------------------------------------------------------------

MODE_LABELS = ("no_compression", "compress_weights", "compress_gradients", "resfed-T0", "resfed-T1")


def mode_label_overrides(label: str) -> dict:
    """Config overrides for a comparison series such as ``resfed-T1``."""
    if label.startswith("resfed-T"):
        try:
            window = int(label[len("resfed-T") :])
        except ValueError as exc:
            raise InvalidConfigError(f"bad series label {label!r}") from exc
        return {"protocol.mode": RESFED, "protocol.predictor.window": window, "protocol.warmup_rounds": None}
    return {"protocol.mode": label}


def _axis_overrides(axis: str, value) -> dict:
    if axis == "sparsity":
        return {
            "protocol.uplink_compression.mode": "sparse_quant",
            "protocol.uplink_compression.sparsity": value,
            "protocol.downlink_compression.mode": "sparse_quant",
            "protocol.downlink_compression.sparsity": value,
        }
    if axis == "mode":
        return mode_label_overrides(value)
    if axis == "partition":
        return {"partition.kind": value}
    raise InvalidConfigError(f"unknown sweep axis {axis!r}; expected sparsity, mode or partition")


def sweep(
    base: ExperimentConfig,
    axis: str,
    values: Sequence,
    out_dir: str | Path | None = None,
    shared_seed: bool = False,
) -> tuple[list[dict], list[RunResult]]:
    """One run per value; run ``i`` uses seed ``base.seed + i`` unless ``shared_seed``."""
    if not values:
        raise InvalidConfigError("sweep needs at least one value")
    rows, results = [], []
    for i, value in enumerate(values):
        overrides = _axis_overrides(axis, value)
        overrides["seed"] = base.seed if shared_seed else base.seed + i
        config = with_overrides(base, overrides)
        sub = Path(out_dir) / f"{axis}={value}" if out_dir is not None else None
        result = run_experiment(config, sub)
        s = result.summary()
        rows.append(
            {
                axis: value,
                "seed": config.seed,
                "final_test_accuracy": s["final_test_accuracy"],
                "uplink_bits": s["uplink_bits"],
                "downlink_bits": s["downlink_bits"],
                "mean_uplink_cr": s["mean_uplink_cr"],
                "mean_downlink_cr": s["mean_downlink_cr"],
            }
        )
        results.append(result)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows({k: _fmt(v) for k, v in row.items()} for row in rows)
        (out / "sweep.csv").write_text(buf.getvalue())
        (out / "summary.json").write_text(
            dumps_json({"axis": axis, "base_config": config_to_dict(base), "runs": rows})
        )
    return rows, results

