"""Image-dataset ingestion, fold construction, and phase streams.

The two real testbeds read the standard gzip-compressed IDX training files
from a local directory (nothing is downloaded). A synthetic gaussian-blob
dataset with the same shape serves as a network-free stand-in so the whole
pipeline can run without any files on disk.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, StreamExhaustedError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# train-file names shared by both datasets; the holdout (t10k) files are
# deliberately never read.
TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"

# canonical per-digit counts of the MNIST training split, digit 0 through 9
MNIST_TRAIN_CLASS_COUNTS = (5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949)


def parse_idx(data: bytes) -> np.ndarray:
    """Decode one complete IDX file into a uint8 tensor.

    Layout: 4-byte big-endian magic (0x00000803 for images, 0x00000801 for
    labels), one 4-byte big-endian size per dimension, then the row-major
    payload. Anything short, long, or mislabeled is a FormatError naming
    the byte offset.
    """
    if len(data) < 4:
        raise FormatError(f"truncated magic: file ends at offset {len(data)}, need 4 bytes")
    magic = int.from_bytes(data[:4], "big")
    if magic not in (IMAGE_MAGIC, LABEL_MAGIC):
        raise FormatError(f"bad magic 0x{magic:08x} at offset 0")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise FormatError(
            f"truncated dimension header: file ends at offset {len(data)}, "
            f"need {header_end} bytes"
        )
    dims = struct.unpack(f">{ndim}I", data[4:header_end])
    expected = 1
    for d in dims:
        expected *= d
    payload = len(data) - header_end
    if payload < expected:
        raise FormatError(
            f"truncated payload: file ends at offset {len(data)}, "
            f"expected {header_end + expected} bytes for dims {dims}"
        )
    if payload > expected:
        raise FormatError(
            f"{payload - expected} trailing bytes after offset {header_end + expected}"
        )
    arr = np.frombuffer(data, dtype=np.uint8, count=expected, offset=header_end)
    return arr.reshape(dims).copy()


def load_idx(path) -> np.ndarray:
    """parse_idx on a file, decompressing transparently when gzipped."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


@dataclass
class Example:
    """One labeled input as the learner sees it: 784 floats in [0, 1]."""

    features: np.ndarray
    label: int
    source_index: int


@dataclass
class Dataset:
    """Raw byte images (N, 784) with integer labels; immutable once built."""

    name: str
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 2 or self.images.shape[0] != self.labels.shape[0]:
            raise ConfigurationError("images and labels disagree on example count")

    @property
    def n(self):
        return self.images.shape[0]

    @property
    def classes(self):
        return np.unique(self.labels)

    def features(self, i) -> np.ndarray:
        # pixel byte b maps to b/255 exactly
        return self.images[i].astype(np.float64) / 255.0

    def example(self, i) -> Example:
        return Example(self.features(i), int(self.labels[i]), int(i))

    def class_counts(self) -> dict:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def idx_file_candidates(data_dir, dataset_id):
    """The train image/label paths we accept, gzipped name preferred."""
    base = Path(data_dir) / dataset_id
    out = []
    for stem in (TRAIN_IMAGES, TRAIN_LABELS):
        gz = base / f"{stem}.gz"
        plain = base / stem
        out.append(gz if gz.exists() else plain)
    return out


def dataset_available(data_dir, dataset_id) -> bool:
    return all(p.exists() for p in idx_file_candidates(data_dir, dataset_id))


def load_dataset(data_dir, dataset_id) -> Dataset:
    """Read the train images/labels of `mnist` or `fashion_mnist`."""
    images_path, labels_path = idx_file_candidates(data_dir, dataset_id)
    for p in (images_path, labels_path):
        if not p.exists():
            raise ConfigurationError(
                f"missing dataset file {p}; place the standard IDX training files "
                f"under {Path(data_dir) / dataset_id}/ "
                f"({TRAIN_IMAGES}[.gz], {TRAIN_LABELS}[.gz])"
            )
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.ndim != 3 or images.shape[1:] != (28, 28):
        raise FormatError(f"expected (N, 28, 28) images, got {images.shape}")
    if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise FormatError(f"label count {labels.shape} does not match images {images.shape}")
    return Dataset(dataset_id, images.reshape(images.shape[0], -1), labels.astype(np.int64))


@dataclass
class FoldAssignment:
    """fold_of[i] is the fold id of example i; k folds total."""

    fold_of: np.ndarray
    k: int

    def indices(self, fold, classes=None, labels=None):
        mask = self.fold_of == fold
        if classes is not None:
            mask &= np.isin(labels, list(classes))
        return np.flatnonzero(mask)

    def sizes(self, labels, cls) -> list:
        return [int(((self.fold_of == f) & (labels == cls)).sum()) for f in range(self.k)]


def stratified_folds(labels, k: int, seed) -> FoldAssignment:
    """Shuffle each class by seed, then deal round-robin across k folds.

    The first (count mod k) folds of a class get the extra example, so
    per-class fold sizes never differ by more than one.
    """
    if k < 2:
        raise ConfigurationError(f"fold count must be at least 2, got {k}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.shape[0], dtype=np.int64)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        perm = rng.permutation(idx)
        fold_of[perm] = np.arange(perm.size) % k
    return FoldAssignment(fold_of, k)


@dataclass(frozen=True)
class PhaseSchedule:
    """Four phases over two class pairs and two folds.

    Phases 1 and 3 hold subtask A (classes c1, c2), phases 2 and 4 subtask B
    (classes c3, c4). first_fold feeds phases 1-2, second_fold phases 3-4,
    which keeps the four phase pools disjoint: no example is ever emitted
    twice in a run.
    """

    subtask_a: tuple
    subtask_b: tuple
    first_fold: int
    second_fold: int

    def __post_init__(self):
        a, b = set(self.subtask_a), set(self.subtask_b)
        if len(a) != 2 or len(b) != 2 or a & b:
            raise ConfigurationError(
                f"class pairs must be disjoint two-class sets: {self.subtask_a} {self.subtask_b}"
            )
        if self.first_fold == self.second_fold:
            raise ConfigurationError("the two phase folds must differ")

    @property
    def classes(self):
        return tuple(self.subtask_a) + tuple(self.subtask_b)

    @property
    def phases(self):
        return (
            (self.subtask_a, self.first_fold),
            (self.subtask_b, self.first_fold),
            (self.subtask_a, self.second_fold),
            (self.subtask_b, self.second_fold),
        )


class PhaseStream:
    """Iterator over one phase's examples in a fixed shuffled order.

    Exhaustion raises StreamExhaustedError rather than StopIteration: a run
    that drains its pool has failed, not finished.
    """

    def __init__(self, dataset, order):
        self._dataset = dataset
        self._order = order
        self._pos = 0

    def __len__(self):
        return len(self._order)

    @property
    def emitted(self):
        return self._pos

    def __next__(self) -> Example:
        if self._pos >= len(self._order):
            raise StreamExhaustedError(
                f"phase stream exhausted after {self._pos} examples"
            )
        i = self._order[self._pos]
        self._pos += 1
        return self._dataset.example(i)


def build_phase_stream(dataset, folds, schedule, seed) -> list:
    """Four PhaseStreams, one per phase, each shuffled by a seed-derived stream."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    children = seed.spawn(4)
    streams = []
    for (classes, fold), child in zip(schedule.phases, children):
        pool = folds.indices(fold, classes, dataset.labels)
        if pool.size == 0:
            raise ConfigurationError(
                f"no examples of classes {classes} in fold {fold}"
            )
        order = np.random.default_rng(child).permutation(pool)
        streams.append(PhaseStream(dataset, order))
    return streams


@dataclass
class ProbeSet:
    """Fixed examples over which the setting-wide metrics are averaged."""

    examples: list
    inputs: np.ndarray = field(init=False)
    labels: np.ndarray = field(init=False)

    def __post_init__(self):
        self.inputs = np.stack([e.features for e in self.examples])
        self.labels = np.array([e.label for e in self.examples], dtype=np.int64)

    def __len__(self):
        return len(self.examples)


def build_probe_set(
    dataset, folds, excluded_folds, n_per_class: int = 10, seed=0, classes=None
) -> ProbeSet:
    """n_per_class examples per class, drawn only outside the excluded folds."""
    if classes is None:
        classes = [int(c) for c in dataset.classes]
    excluded = set(excluded_folds)
    rng = np.random.default_rng(seed)
    chosen = []
    for cls in classes:
        eligible = np.flatnonzero(
            (dataset.labels == cls) & ~np.isin(folds.fold_of, list(excluded))
        )
        if eligible.size < n_per_class:
            raise ConfigurationError(
                f"class {cls} has only {eligible.size} examples outside folds "
                f"{sorted(excluded)}, need {n_per_class}"
            )
        picks = rng.choice(eligible, size=n_per_class, replace=False)
        chosen.extend(int(i) for i in picks)
    return ProbeSet([dataset.example(i) for i in chosen])


def synth_dataset(n_per_class: int, class_count: int = 4, seed=0, spread: float = 0.06) -> Dataset:
    """Gaussian-blob byte images: one well-separated 784-dim blob per class.

    Class means are uniform in [0.2, 0.8] per pixel, examples are the mean
    plus N(0, spread^2) noise, clipped to [0, 1] and quantized to bytes.
    Nearest-class-mean classification is perfect at the default spread.
    """
    if n_per_class < 1:
        raise ConfigurationError("n_per_class must be at least 1")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.2, 0.8, size=(class_count, 784))
    images = np.empty((class_count * n_per_class, 784), dtype=np.uint8)
    labels = np.empty(class_count * n_per_class, dtype=np.int64)
    for cls in range(class_count):
        block = slice(cls * n_per_class, (cls + 1) * n_per_class)
        x = means[cls] + rng.normal(0.0, spread, size=(n_per_class, 784))
        images[block] = np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)
        labels[block] = cls
    perm = rng.permutation(images.shape[0])
    return Dataset("synth", images[perm], labels[perm])
