"""IDX (MNIST-style) and CIFAR-10 binary dataset loading, plus IDX writing.

Paths ending in .gz are compressed or decompressed transparently.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 32 * 32 pixels

__all__ = [
    "Dataset",
    "load_idx_images",
    "load_idx_labels",
    "load_mnist",
    "write_idx_images",
    "write_idx_labels",
    "load_cifar10",
]


@dataclass
class Dataset:
    """Labelled u8 images, shaped (count, height, width, channels)."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError("images must be (count, height, width, channels)")
        if self.labels.ndim != 1 or len(self.labels) != len(self.images):
            raise ValueError("label count must match image count")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative class indices")

    def __len__(self) -> int:
        return len(self.images)


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".gz":
        # mtime=0 keeps the archive byte-stable across runs
        with gzip.GzipFile(path, "wb", mtime=0) as f:
            f.write(data)
    else:
        path.write_bytes(data)


def load_idx_images(path) -> np.ndarray:
    """u8 images from an IDX file, shaped (count, rows, cols, 1)."""
    data = _read_bytes(path)
    if len(data) < 16:
        raise ValueError(f"{path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"{path}: bad IDX image magic {magic:#010x}")
    if len(data) != 16 + count * rows * cols:
        raise ValueError(f"{path}: IDX payload size mismatch")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(count, rows, cols, 1)


def load_idx_labels(path) -> np.ndarray:
    """Label bytes from an IDX file."""
    data = _read_bytes(path)
    if len(data) < 8:
        raise ValueError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise ValueError(f"{path}: bad IDX label magic {magic:#010x}")
    if len(data) != 8 + count:
        raise ValueError(f"{path}: IDX payload size mismatch")
    return np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)


def load_mnist(images_path, labels_path) -> Dataset:
    """MNIST-format dataset from an IDX image/label file pair."""
    return Dataset(load_idx_images(images_path), load_idx_labels(labels_path))


def write_idx_images(images: np.ndarray, path) -> None:
    """Write u8 images (count, rows, cols[, 1]) as an IDX file."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim == 4:
        if images.shape[3] != 1:
            raise ValueError("IDX images must be single channel")
        images = images[..., 0]
    if images.ndim != 3:
        raise ValueError("images must be (count, rows, cols)")
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape)
    _write_bytes(path, header + images.tobytes())


def write_idx_labels(labels: np.ndarray, path) -> None:
    """Write class labels (< 256) as an IDX file."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("labels must be a 1-D array of bytes")
    header = struct.pack(">II", IDX_LABELS_MAGIC, labels.size)
    _write_bytes(path, header + labels.astype(np.uint8).tobytes())


def load_cifar10(paths: Iterable) -> Dataset:
    """CIFAR-10 binary batches: 3073-byte records, channel-planar pixels."""
    images = []
    labels = []
    for path in paths:
        data = _read_bytes(path)
        if not data or len(data) % CIFAR_RECORD_BYTES:
            raise ValueError(f"{path}: not a whole number of CIFAR-10 records")
        records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(records[:, 0].astype(np.int64))
        images.append(records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1))
    if not images:
        raise ValueError("no CIFAR-10 batch files given")
    return Dataset(np.concatenate(images), np.concatenate(labels))
