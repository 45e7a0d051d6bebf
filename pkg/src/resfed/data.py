"""Datasets: synthetic blobs, IDX (MNIST-style) files, client partitioning."""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDataError, FormatError, InvalidConfigError
from .rng import make_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # (n, dim) float32
    labels: np.ndarray  # (n,) int64
    n_classes: int

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {features.shape}")
        if features.shape[0] != labels.size:
            raise ValueError(f"{features.shape[0]} feature rows but {labels.size} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def split(self, test_fraction: float) -> tuple["Dataset", "Dataset"]:
        """Deterministic tail split: the last ``test_fraction`` of rows become the test set."""
        n_test = int(round(len(self) * test_fraction))
        cut = len(self) - n_test
        return self.subset(np.arange(cut)), self.subset(np.arange(cut, len(self)))

    @staticmethod
    def concat(parts: list["Dataset"]) -> "Dataset":
        if not parts:
            raise EmptyDataError("nothing to concatenate")
        return Dataset(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            max(p.n_classes for p in parts),
        )


def _lattice_centers(n_classes: int, dim: int) -> np.ndarray:
    side = 2
    while side**dim < n_classes:
        side += 1
    centers = np.zeros((n_classes, dim), dtype=np.float64)
    for c in range(n_classes):
        q = c
        for d in range(dim):
            q, centers[c, d] = divmod(q, side)
    return centers


def make_blobs(n_samples: int, dim: int, n_classes: int, spread: float, seed: int) -> Dataset:
    """Isotropic Gaussian clusters, one per class, centred on the integer lattice.

    Class sizes differ by at most one. Rows come out in random order.
    """
    if n_samples <= 0 or dim <= 0 or n_classes <= 0:
        raise InvalidConfigError("n_samples, dim and n_classes must be positive")
    if not spread > 0:
        raise InvalidConfigError("spread must be positive")
    if n_classes > n_samples:
        raise InvalidConfigError(f"n_classes={n_classes} exceeds n_samples={n_samples}")
    rng = make_rng(seed, 0xB10B5)
    labels = np.arange(n_samples) % n_classes
    noise = rng.standard_normal((n_samples, dim))
    features = _lattice_centers(n_classes, dim)[labels] + spread * noise
    order = rng.permutation(n_samples)
    return Dataset(features[order].astype(np.float32), labels[order], n_classes)


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, magic: int, ndim: int, what: str) -> tuple[tuple[int, ...], np.ndarray]:
    header = 4 + 4 * ndim
    if len(raw) < 4:
        raise FormatError(f"{what}: truncated magic number", len(raw))
    (found,) = struct.unpack_from(">I", raw, 0)
    if found != magic:
        raise FormatError(f"{what}: bad magic 0x{found:08x}, expected 0x{magic:08x}", 0)
    if len(raw) < header:
        raise FormatError(f"{what}: truncated dimension header", len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    size = math.prod(dims)
    if len(raw) < header + size:
        raise FormatError(f"{what}: truncated data, expected {size} bytes", len(raw))
    if len(raw) > header + size:
        raise FormatError(f"{what}: {len(raw) - header - size} trailing bytes", header + size)
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=header)
    return dims, data


def read_idx(images_path, labels_path, n_classes: int = 10) -> Dataset:
    """Load an IDX image/label file pair (optionally gzipped); pixels scaled to [0, 1]."""
    (n_images, rows, cols), pixels = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, 3, "images")
    (n_labels,), labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, 1, "labels")
    if n_images != n_labels:
        raise FormatError(f"{n_images} images but {n_labels} labels", 4)
    if n_labels and int(labels.max()) >= n_classes:
        bad = int(np.argmax(labels >= n_classes))
        raise FormatError(f"label {int(labels[bad])} out of range [0, {n_classes})", 8 + bad)
    features = pixels.reshape(n_images, rows * cols).astype(np.float32) / np.float32(255.0)
    return Dataset(features, labels.astype(np.int64), n_classes)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images (n, rows, cols) and labels (n,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.tobytes())


def partition_iid(dataset: Dataset, n_clients: int, seed: int) -> list[Dataset]:
    """Random permutation split into shards whose sizes differ by at most one."""
    if n_clients <= 0:
        raise InvalidConfigError("n_clients must be positive")
    if n_clients > len(dataset):
        raise InvalidConfigError(f"n_clients={n_clients} exceeds {len(dataset)} samples")
    perm = make_rng(seed, 0x11D).permutation(len(dataset))
    return [dataset.subset(np.sort(chunk)) for chunk in np.array_split(perm, n_clients)]


def partition_label_shard(dataset: Dataset, n_clients: int, classes_per_client: int, seed: int) -> list[Dataset]:
    """Give every client exactly ``classes_per_client`` distinct classes.

    Each class is cut into ``n_clients * classes_per_client / n_classes``
    equal shards. Shards are laid out class-major (classes in shuffled order)
    and client k takes positions k, k + n_clients, ...; since a class block is
    never longer than ``n_clients`` no client draws the same class twice.
    """
    n_classes = dataset.n_classes
    if n_clients <= 0 or classes_per_client <= 0:
        raise InvalidConfigError("n_clients and classes_per_client must be positive")
    if classes_per_client > n_classes:
        raise InvalidConfigError(f"classes_per_client={classes_per_client} exceeds {n_classes} classes")
    total_shards = n_clients * classes_per_client
    if total_shards % n_classes:
        raise InvalidConfigError(
            f"{n_clients} clients x {classes_per_client} classes cannot be split evenly over {n_classes} classes"
        )
    per_class = total_shards // n_classes
    counts = dataset.class_counts()
    if counts.min() < per_class:
        short = int(np.argmin(counts))
        raise InvalidConfigError(f"class {short} has {counts[short]} samples, needs at least {per_class} shards")

    rng = make_rng(seed, 0x5A4D)
    class_order = rng.permutation(n_classes)
    shards = []
    for c in class_order:
        members = rng.permutation(np.flatnonzero(dataset.labels == c))
        shards.extend(np.array_split(members, per_class))
    clients = []
    for k in range(n_clients):
        idx = np.concatenate([shards[k + m * n_clients] for m in range(classes_per_client)])
        clients.append(dataset.subset(np.sort(idx)))
    return clients
