"""Dataset ingestion: MNIST-format IDX files and synthetic generators.

IDX parsing is bit-exact: big-endian magic (0x00000803 for images,
0x00000801 for labels), big-endian dimension headers, unsigned bytes.
Pixels are scaled to [0, 1] by division with 255 and nothing else; gzipped
files are detected and decompressed transparently.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import sample_haar_orthogonal
from .rng import Rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_DIR_ENV = "TIGHTBOX_DATA_DIR"

MNIST_FILES = {
    ("train", "images"): "train-images-idx3-ubyte",
    ("train", "labels"): "train-labels-idx1-ubyte",
    ("test", "images"): "t10k-images-idx3-ubyte",
    ("test", "labels"): "t10k-labels-idx1-ubyte",
}


class IdxFormatError(ValueError):
    """Malformed IDX file; message carries the byte offset."""


@dataclass(frozen=True)
class DatasetHandle:
    """In-memory dataset: flat float64 inputs, integer labels, input domain.

    ``domain`` is the valid per-feature range (None when unbounded) and
    ``image_shape`` the (C, H, W) layout for image data.
    """

    kind: str
    inputs: np.ndarray
    labels: np.ndarray
    domain: tuple[float, float] | None
    image_shape: tuple[int, int, int] | None = None

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels disagree on the sample count")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise IdxFormatError(f"truncated {what}: wanted {n} bytes at offset {fh.tell() - len(data)}")
    return data


def _open_maybe_gzip(path):
    fh = open(path, "rb")
    head = fh.read(2)
    fh.seek(0)
    if head == b"\x1f\x8b":
        fh.close()
        return gzip.open(path, "rb")
    return fh


def _load_idx(path, magic: int, ndim: int):
    with _open_maybe_gzip(path) as fh:
        got = struct.unpack(">I", _read_exact(fh, 4, "magic"))[0]
        if got != magic:
            raise IdxFormatError(f"bad magic 0x{got:08x} at offset 0, expected 0x{magic:08x}")
        dims = struct.unpack(f">{ndim}I", _read_exact(fh, 4 * ndim, "dimension header"))
        n_bytes = 1
        for d in dims:
            n_bytes *= d
        payload = _read_exact(fh, n_bytes, "payload")
        if fh.read(1):
            raise IdxFormatError(f"trailing bytes after offset {4 + 4 * ndim + n_bytes}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_mnist(images_path, labels_path, limit: int | None = None) -> DatasetHandle:
    """Parse an MNIST-style IDX image/label pair into a DatasetHandle.

    ``limit`` keeps the first N items in file order.  Pixel bytes map to
    [0, 1] via /255; no augmentation or normalization beyond that.
    """
    images = _load_idx(images_path, IMAGE_MAGIC, 3)
    labels = _load_idx(labels_path, LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images vs {labels.shape[0]} labels")
    if np.any(labels > 9):
        raise IdxFormatError("labels out of range 0..9")
    if limit is not None:
        images = images[:limit]
        labels = labels[:limit]
    n, rows, cols = images.shape
    inputs = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    return DatasetHandle(
        kind="mnist",
        inputs=inputs,
        labels=labels.astype(np.int64),
        domain=(0.0, 1.0),
        image_shape=(1, rows, cols),
    )


def write_idx_images(path, images: np.ndarray):
    """Write (n, rows, cols) uint8 images in IDX format."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray):
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def data_dir(override=None) -> Path:
    """Dataset root: explicit override, else $TIGHTBOX_DATA_DIR, else ./data."""
    if override is not None:
        return Path(override)
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def mnist_paths(split: str, root=None) -> tuple[Path, Path]:
    if split not in ("train", "test"):
        raise ValueError("split must be 'train' or 'test'")
    base = data_dir(root)
    return base / MNIST_FILES[(split, "images")], base / MNIST_FILES[(split, "labels")]


def load_mnist_split(split: str, root=None, limit: int | None = None) -> DatasetHandle:
    images, labels = mnist_paths(split, root)
    return load_mnist(images, labels, limit)


def gen_toy2d(rng: Rng, n: int) -> DatasetHandle:
    """Two linearly separable Gaussian blobs in [0, 1]^2.

    Class centers sit at (0.25, 0.25) and (0.75, 0.75); each offset is
    clipped to norm 0.1, so the class margin is at least 0.5.  Labels
    alternate, so any prefix of length >= 2 contains both classes.
    """
    if n < 2:
        raise ValueError("need at least 2 points")
    gen = rng.generator()
    labels = np.arange(n) % 2
    centers = np.where(labels[:, np.newaxis] == 0, 0.25, 0.75) * np.ones((n, 2))
    offsets = 0.035 * gen.standard_normal((n, 2))
    norms = np.linalg.norm(offsets, axis=1, keepdims=True)
    offsets *= np.minimum(1.0, 0.1 / np.maximum(norms, 1e-300))
    return DatasetHandle(
        kind="toy2d",
        inputs=centers + offsets,
        labels=labels.astype(np.int64),
        domain=(0.0, 1.0),
    )


def gen_lowrank(rng: Rng, n: int, d: int, k: int) -> DatasetHandle:
    """Points on a random k-dimensional subspace of R^d, labelled by one coordinate."""
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    u_k = sample_haar_orthogonal(rng, d)[:, :k]
    z = rng.substream(1).generator().standard_normal((n, k))
    return DatasetHandle(
        kind="lowrank-synthetic",
        inputs=z @ u_k.T,
        labels=(z[:, 0] > 0).astype(np.int64),
        domain=None,
    )
