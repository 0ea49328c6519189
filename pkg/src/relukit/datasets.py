"""Datasets: sample stores, IDX binary ingestion and synthetic generators.

Inputs are normalized to [0, 1] at ingestion so robustness properties have a
fixed global input domain.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Sample", "Dataset", "IdxFormatError", "load_idx_dataset", "synth_blobs"]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file."""


@dataclass
class Sample:
    input: np.ndarray
    label: int

    def __post_init__(self):
        self.input = np.asarray(self.input, dtype=np.float64)
        self.label = int(self.label)


@dataclass
class Dataset:
    input_dim: int
    num_classes: int
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def _check(self, sample: Sample) -> None:
        if sample.input.shape != (self.input_dim,):
            raise ValueError(f"sample dimension {sample.input.shape[0]} != "
                             f"dataset input_dim {self.input_dim}")
        if not 0 <= sample.label < self.num_classes:
            raise ValueError(f"label {sample.label} out of range "
                             f"[0, {self.num_classes})")

    def add_train_sample(self, sample: Sample) -> None:
        self._check(sample)
        self.train.append(sample)

    def add_test_sample(self, sample: Sample) -> None:
        self._check(sample)
        self.test.append(sample)


def _read_idx_images(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise IdxFormatError(f"{path}: truncated header")
    magic, n, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, "
                             f"expected 0x{IDX_IMAGES_MAGIC:08x}")
    expected = 16 + n * rows * cols
    if len(data) < expected:
        raise IdxFormatError(f"{path}: truncated payload "
                             f"({len(data)} bytes, expected {expected})")
    if len(data) > expected:
        raise IdxFormatError(f"{path}: {len(data) - expected} trailing bytes")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(n, rows * cols).astype(np.float64) / 255.0


def _read_idx_labels(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise IdxFormatError(f"{path}: truncated header")
    magic, n = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, "
                             f"expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(data) < 8 + n:
        raise IdxFormatError(f"{path}: truncated payload")
    if len(data) > 8 + n:
        raise IdxFormatError(f"{path}: {len(data) - 8 - n} trailing bytes")
    return np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)


def load_idx_dataset(images_path: str, labels_path: str, split: str,
                     into: Dataset) -> Dataset:
    """Load an IDX image/label file pair into one split of `into`.

    The split is replaced wholesale; pixels are scaled to [0, 1].
    """
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    images = _read_idx_images(images_path)
    labels = _read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"count mismatch: {images.shape[0]} images vs "
                             f"{labels.shape[0]} labels")
    if images.shape[1] != into.input_dim:
        raise ValueError(f"image dimension {images.shape[1]} != "
                         f"dataset input_dim {into.input_dim}")
    if labels.size and labels.max() >= into.num_classes:
        raise ValueError(f"label {labels.max()} out of range "
                         f"[0, {into.num_classes})")
    samples = [Sample(images[i], int(labels[i])) for i in range(images.shape[0])]
    if split == "train":
        into.train = samples
    else:
        into.test = samples
    return into


def synth_blobs(seed: int, n_per_class: int, num_classes: int, dim: int,
                spread: float) -> Dataset:
    """Gaussian blobs around distinct class centers, clipped to [0, 1]^dim.

    Deterministic for a fixed seed; 80/20 train/test split by interleaving
    (every fifth sample of each class goes to the test split).
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if dim < 1:
        raise ValueError("dim must be positive")
    rng = np.random.default_rng(seed)
    ds = Dataset(input_dim=dim, num_classes=num_classes)
    # Centers evenly spaced along the main diagonal of the unit cube.
    centers = [np.full(dim, (c + 1) / (num_classes + 1)) for c in range(num_classes)]
    for c in range(num_classes):
        points = rng.normal(loc=centers[c], scale=spread, size=(n_per_class, dim))
        points = np.clip(points, 0.0, 1.0)
        for i in range(n_per_class):
            sample = Sample(points[i], c)
            if i % 5 == 4:
                ds.add_test_sample(sample)
            else:
                ds.add_train_sample(sample)
    return ds
