"""Datasets: the IDX container used by MNIST and a synthetic blob generator."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


class IdxFormatError(ValueError):
    """Base class for malformed IDX input."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxCountMismatchError(IdxFormatError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray  # (count, H, W, C) in [0, 1]
    labels: np.ndarray  # (count,)
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    def subset(self, indices) -> "Dataset":
        return Dataset(self.images[indices], self.labels[indices], self.num_classes, self.split)

    def downsample(self, factor: int) -> "Dataset":
        """Average-pool non-overlapping ``factor x factor`` blocks."""
        if factor == 1:
            return self
        n, h, w, c = self.images.shape
        h2, w2 = h // factor, w // factor
        blocks = self.images[:, :h2 * factor, :w2 * factor].reshape(n, h2, factor, w2, factor, c)
        return Dataset(blocks.mean(axis=(2, 4)), self.labels, self.num_classes, self.split)


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse(raw: bytes, path, magic: int, ndim: int) -> np.ndarray:
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file too short for an IDX header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxMagicError(f"{path}: magic number {found}, expected {magic}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: header needs {header} bytes, file has {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise IdxTruncatedError(
            f"{path}: expected {size} data bytes for dims {dims}, found {len(raw) - header}"
        )
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def read_idx_images(path) -> np.ndarray:
    return _parse(_read_bytes(path), path, IMAGE_MAGIC, 3)


def read_idx_labels(path) -> np.ndarray:
    return _parse(_read_bytes(path), path, LABEL_MAGIC, 1)


def load_idx(images_path, labels_path, num_classes: int = 10, split: str = "train") -> Dataset:
    """Load an IDX image/label pair (optionally gzipped). Pixels are scaled by 1/255."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IdxCountMismatchError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels"
        )
    if labels.size and labels.max() >= num_classes:
        raise IdxFormatError(f"{labels_path}: label {labels.max()} outside [0, {num_classes})")
    return Dataset(images[..., None] / 255.0, labels.astype(np.int64), num_classes, split)


def write_idx(path, array: np.ndarray) -> None:
    """Write uint8 images ``(count, H, W)`` or labels ``(count,)`` as IDX."""
    array = np.asarray(array)
    magic = {3: IMAGE_MAGIC, 1: LABEL_MAGIC}.get(array.ndim)
    if magic is None:
        raise ValueError(f"IDX writer takes 1-D labels or 3-D images, got shape {array.shape}")
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    Path(path).write_bytes(header + array.astype(np.uint8).tobytes())


def gen_synthetic(n: int, side: int, k: int, seed, noise: float = 0.1, split: str = "train") -> Dataset:
    """Gaussian-blob class prototypes plus pixel noise.

    Class ``j`` is a blob centred on a circle at angle ``2 pi j / k``; labels
    are balanced and shuffled. Intensities are clipped to ``[0, 1]``.
    """
    if n < k:
        raise ValueError(f"need at least one sample per class, got n={n}, k={k}")
    rng = np.random.default_rng(seed)
    rows, cols = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    centre = (side - 1) / 2
    angles = 2 * np.pi * np.arange(k) / k
    radius = side / 4
    width = max(side / 8, 0.75)
    protos = np.exp(-(((rows - centre - radius * np.sin(angles)[:, None, None]) ** 2
                       + (cols - centre - radius * np.cos(angles)[:, None, None]) ** 2)
                      / (2 * width ** 2)))
    labels = rng.permutation(np.arange(n) % k)
    images = protos[labels] + noise * rng.standard_normal((n, side, side))
    return Dataset(np.clip(images, 0.0, 1.0)[..., None], labels.astype(np.int64), k, split)


def to_uint8(images: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(images, 0.0, 1.0) * 255).astype(np.uint8)
