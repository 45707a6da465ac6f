"""Dataset generation, the group-based class-imbalanced partitioner, and
an IDX loader for real image datasets flattened to vectors."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from fedrema.errors import ConfigurationError, IdxFormatError
from fedrema.nn import LabeledBatch

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class SamplePool:
    """A flat labeled pool; inputs (n, d) float64, labels (n,) ints."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def class_indices(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == c) for c in range(self.num_classes)]


@dataclass
class ClientDataset:
    train: LabeledBatch
    test: LabeledBatch
    class_histogram: np.ndarray  # per-class counts of the train split

    @property
    def size(self) -> int:
        return len(self.train)


def default_dominant_labels(num_classes: int, num_groups: int,
                            dominant_per_group: int) -> list[tuple[int, ...]]:
    """Group g dominates labels (C*g//G + j) mod C for j in 0..dpg-1.

    For C=10, G=5, dpg=3 this is {2g, 2g+1, 2g+2} mod 10: every label is
    covered and adjacent groups overlap by one label.
    """
    return [
        tuple((num_classes * g // num_groups + j) % num_classes
              for j in range(dominant_per_group))
        for g in range(num_groups)
    ]


@dataclass
class PartitionSpec:
    num_clients: int = 10
    num_classes: int = 10
    samples_per_client: int = 600
    iid_fraction: float = 0.2
    num_groups: int = 5
    dominant_per_group: int = 3
    seed: int = 0
    dominant_labels: list[tuple[int, ...]] = field(default=None)
    global_without_replacement: bool = False
    test_ratio: float = 0.2  # 4:1 train/test split

    def __post_init__(self):
        if not (0.0 <= self.iid_fraction <= 1.0):
            raise ConfigurationError(f"iid_fraction must be in [0,1], got {self.iid_fraction}")
        if self.dominant_labels is None:
            self.dominant_labels = default_dominant_labels(
                self.num_classes, self.num_groups, self.dominant_per_group)
        for g, labels in enumerate(self.dominant_labels):
            if len(set(labels)) != self.dominant_per_group:
                raise ConfigurationError(f"group {g} dominant labels not distinct: {labels}")

    def group_of_client(self, k: int) -> int:
        return k % self.num_groups

    def client_dominant_labels(self, k: int) -> tuple[int, ...]:
        return self.dominant_labels[self.group_of_client(k)]


def generate_synthetic(num_classes: int, input_dim: int, class_separation: float,
                       seed: int, samples_per_class: int = 1000) -> SamplePool:
    """Class-balanced pool of prototype + unit Gaussian noise samples.

    Prototypes are rows of a seeded random orthonormal basis scaled by
    class_separation, so any two prototypes are separation*sqrt(2) apart.
    """
    if input_dim < num_classes:
        raise ConfigurationError(
            f"input_dim ({input_dim}) must be >= num_classes ({num_classes})")
    if class_separation < 0:
        raise ConfigurationError("class_separation must be >= 0")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((input_dim, input_dim)))
    prototypes = class_separation * basis[:num_classes]
    n = num_classes * samples_per_class
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    inputs = prototypes[labels] + rng.standard_normal((n, input_dim))
    return SamplePool(inputs, labels, num_classes)


def _even_allocation(total: int, classes: tuple[int, ...] | list[int]) -> dict[int, int]:
    """Spread `total` draws as evenly as possible over `classes`;
    the remainder goes to the lowest class indices (seed-independent,
    so histograms match across seeds)."""
    classes = sorted(classes)
    base, rem = divmod(total, len(classes))
    return {c: base + (1 if i < rem else 0) for i, c in enumerate(classes)}


def client_class_allocation(spec: PartitionSpec, k: int) -> np.ndarray:
    """Exact per-class draw counts for client k: round(s*N) spread over
    all classes plus the remainder spread over the dominant labels."""
    n_iid = int(round(spec.iid_fraction * spec.samples_per_client))
    n_dom = spec.samples_per_client - n_iid
    alloc = np.zeros(spec.num_classes, dtype=np.int64)
    for c, m in _even_allocation(n_iid, list(range(spec.num_classes))).items():
        alloc[c] += m
    if n_dom > 0:
        for c, m in _even_allocation(n_dom, spec.client_dominant_labels(k)).items():
            alloc[c] += m
    return alloc


def partition(pool: SamplePool, spec: PartitionSpec) -> list[ClientDataset]:
    """Assign every client its class-imbalanced local dataset.

    Draws are without replacement within a client; by default clients
    draw independently from the full pool (so two clients may share a
    source sample). With global_without_replacement, samples are
    consumed from the pool across clients. The per-client 4:1
    train/test split is stratified per class so the test distribution
    matches the train distribution.
    """
    if pool.num_classes != spec.num_classes:
        raise ConfigurationError("pool and spec disagree on num_classes")
    by_class = pool.class_indices()
    remaining = [idx.copy() for idx in by_class]
    clients = []
    for k in range(spec.num_clients):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, k]))
        alloc = client_class_allocation(spec, k)
        train_idx, test_idx = [], []
        for c in range(spec.num_classes):
            m = int(alloc[c])
            if m == 0:
                continue
            source = remaining[c] if spec.global_without_replacement else by_class[c]
            if m > len(source):
                raise ConfigurationError(
                    f"pool exhausted for class {c}: client {k} needs {m} samples, "
                    f"{len(source)} available")
            chosen = rng.choice(source, size=m, replace=False)
            if spec.global_without_replacement:
                remaining[c] = np.setdiff1d(remaining[c], chosen, assume_unique=True)
            n_test = int(m * spec.test_ratio)
            test_idx.extend(chosen[:n_test])
            train_idx.extend(chosen[n_test:])
        train_idx = np.asarray(train_idx, dtype=np.int64)
        test_idx = np.asarray(test_idx, dtype=np.int64)
        train = LabeledBatch(pool.inputs[train_idx], pool.labels[train_idx])
        test = LabeledBatch(pool.inputs[test_idx], pool.labels[test_idx])
        hist = np.bincount(train.labels, minlength=spec.num_classes)
        clients.append(ClientDataset(train, test, hist))
    return clients


def _read_be32(data: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(data):
        raise IdxFormatError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", data, offset)[0]


def load_idx(images_path: str, labels_path: str) -> SamplePool:
    """Load an IDX image/label file pair into a flat [0,1]-scaled pool."""
    with open(images_path, "rb") as f:
        img_data = f.read()
    with open(labels_path, "rb") as f:
        lbl_data = f.read()

    magic = _read_be32(img_data, 0, images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(
            f"{images_path}: bad image magic 0x{magic:08x} at byte 0")
    n = _read_be32(img_data, 4, images_path)
    rows = _read_be32(img_data, 8, images_path)
    cols = _read_be32(img_data, 12, images_path)
    expected = 16 + n * rows * cols
    if len(img_data) < expected:
        raise IdxFormatError(
            f"{images_path}: truncated pixel data at byte {len(img_data)} "
            f"(expected {expected} bytes)")

    magic = _read_be32(lbl_data, 0, labels_path)
    if magic != IDX_LABEL_MAGIC:
        raise IdxFormatError(
            f"{labels_path}: bad label magic 0x{magic:08x} at byte 0")
    n_labels = _read_be32(lbl_data, 4, labels_path)
    if n_labels != n:
        raise IdxFormatError(
            f"{labels_path}: label count {n_labels} != image count {n} (byte 4)")
    if len(lbl_data) < 8 + n:
        raise IdxFormatError(
            f"{labels_path}: truncated label data at byte {len(lbl_data)}")

    pixels = np.frombuffer(img_data, dtype=np.uint8, count=n * rows * cols, offset=16)
    inputs = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lbl_data, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    num_classes = int(labels.max()) + 1 if n else 0
    return SamplePool(inputs, labels, num_classes)
