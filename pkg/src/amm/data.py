"""Dataset loading, splits, and the synthetic benchmark generator.

Two on-disk formats are supported:
  - IDX (big-endian, magic 0x00000801 / 0x00000803, u8 payload), the
    standard MNIST container.
  - A raw RGB container for converted SVHN-style data: ASCII magic
    "AMMRAW1\\n", little-endian u32 N, H, W, C, then N*H*W*C pixel bytes
    (row-major, channel-last), then N label bytes in 0..9.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

IDX_MAGIC_LABELS = 0x00000801
IDX_MAGIC_IMAGES = 0x00000803
RAW_MAGIC = b"AMMRAW1\n"


class FormatError(ValueError):
    pass


@dataclass
class Dataset:
    """Immutable collection of examples; images flat or shaped, in [0,1]."""

    images: np.ndarray
    labels: Optional[np.ndarray] = None
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape[0] != self.images.shape[0]:
                raise ValueError("labels and images disagree on example count")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def example_shape(self) -> tuple:
        return self.images.shape[1:]

    def subset(self, indices: np.ndarray, split: Optional[str] = None) -> "Dataset":
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(self.images[indices], labels, split or self.split)


@dataclass(frozen=True)
class SplitSpec:
    """Validation holdout and labeled-subset selection, seeded.

    With ``stratified`` the labeled subset is drawn per class in equal
    counts (labeled_count must divide evenly by the number of classes).
    """

    val_count: int
    labeled_count: int = 0
    seed: int = 0
    stratified: bool = False


def load_idx(path) -> np.ndarray:
    """Parse a big-endian IDX file into a float array scaled to [0,1].

    Label files (magic 0x00000801) come back as an int vector instead.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: too short to hold an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IDX_MAGIC_IMAGES:
        ndim = 3
    elif magic == IDX_MAGIC_LABELS:
        ndim = 1
    else:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated IDX dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = header_len + int(np.prod(dims))
    if len(raw) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for dims {dims}, got {len(raw)}"
        )
    payload = np.frombuffer(raw, dtype=np.uint8, offset=header_len)
    if magic == IDX_MAGIC_LABELS:
        return payload.astype(np.int64)
    return (payload.astype(np.float32) / 255.0).reshape(dims)


def load_mnist(images_path, labels_path, split: str = "train") -> Dataset:
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.ndim != 3:
        raise FormatError(f"{images_path}: not an image tensor")
    if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise FormatError("image and label files disagree on example count")
    return Dataset(images[..., None], labels, split)


def write_raw_rgb(path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write the raw RGB container. `images` is N x H x W x C uint8 or [0,1] float."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    if images.ndim != 4:
        raise FormatError("images must be N x H x W x C")
    labels = np.asarray(labels, dtype=np.int64)
    if np.any((labels < 0) | (labels > 9)):
        raise FormatError("labels must be in 0..9")
    n, h, w, c = images.shape
    with open(path, "wb") as f:
        f.write(RAW_MAGIC)
        f.write(struct.pack("<4I", n, h, w, c))
        f.write(images.tobytes())
        f.write(labels.astype(np.uint8).tobytes())


def load_raw_rgb(path, split: str = "train") -> Dataset:
    """Read the raw RGB container written by `write_raw_rgb`."""
    raw = Path(path).read_bytes()
    if raw[: len(RAW_MAGIC)] != RAW_MAGIC:
        raise FormatError(f"{path}: bad raw-container magic")
    off = len(RAW_MAGIC)
    n, h, w, c = struct.unpack("<4I", raw[off : off + 16])
    off += 16
    expected = off + n * h * w * c + n
    if len(raw) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for N={n} {h}x{w}x{c}, got {len(raw)}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=off, count=n * h * w * c)
    labels = np.frombuffer(raw, dtype=np.uint8, offset=off + n * h * w * c)
    if labels.size and labels.max() > 9:
        raise FormatError(f"{path}: label byte {labels.max()} out of range 0..9")
    images = (pixels.astype(np.float32) / 255.0).reshape(n, h, w, c)
    return Dataset(images, labels.astype(np.int64), split)


def convert_svhn_mat(mat_path, out_path) -> int:
    """One-shot conversion of an SVHN .mat file to the raw container.

    Normalizes the "10 means digit 0" label convention. Returns the number
    of converted examples.
    """
    from scipy.io import loadmat

    mat = loadmat(mat_path)
    x = mat["X"]  # H x W x C x N
    y = mat["y"].reshape(-1).astype(np.int64)
    y[y == 10] = 0
    images = np.transpose(x, (3, 0, 1, 2))
    write_raw_rgb(out_path, images, y)
    return images.shape[0]


def synthetic_value_span(separation: float) -> float:
    """Half-width of the box containing essentially all synthetic points."""
    return separation + 4.0


def make_synthetic_mixture(
    k: int, n_per_component: int, separation: float, seed: int, dim: int = 2
) -> Dataset:
    """Unit-variance Gaussian blobs with means on a circle of radius `separation`.

    Points are kept as raw vectors (not squashed into [0,1]); runs on this
    benchmark configure the decoder output range to the matching span.
    """
    if k < 2:
        raise ValueError("need at least 2 components")
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(k) / k
    means = np.zeros((k, dim))
    means[:, 0] = separation * np.cos(angles)
    means[:, 1] = separation * np.sin(angles)
    points = []
    labels = []
    for c in range(k):
        points.append(means[c] + rng.standard_normal((n_per_component, dim)))
        labels.append(np.full(n_per_component, c, dtype=np.int64))
    images = np.concatenate(points).astype(np.float32)
    labels = np.concatenate(labels)
    perm = rng.permutation(images.shape[0])
    return Dataset(images[perm], labels[perm])


def split_and_select(dataset: Dataset, spec: SplitSpec):
    """Split off a validation set and draw the labeled subset from train.

    Returns (train, val, labeled) where `labeled` is drawn uniformly
    without replacement from the post-split training set. Deterministic
    given the spec seed.
    """
    n = len(dataset)
    if spec.val_count >= n:
        raise ValueError(f"val_count {spec.val_count} >= dataset size {n}")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    val_idx = perm[: spec.val_count]
    train_idx = perm[spec.val_count :]
    train = dataset.subset(train_idx, "train")
    val = dataset.subset(val_idx, "val")
    if spec.labeled_count > len(train):
        raise ValueError(
            f"labeled_count {spec.labeled_count} > training size {len(train)}"
        )
    if spec.stratified and spec.labeled_count > 0:
        if train.labels is None:
            raise ValueError("stratified selection requires labels")
        classes = np.unique(train.labels)
        per_class, rem = divmod(spec.labeled_count, classes.size)
        if rem:
            raise ValueError(
                f"labeled_count {spec.labeled_count} not divisible by "
                f"{classes.size} classes"
            )
        parts = []
        for c in classes:
            pool = np.flatnonzero(train.labels == c)
            if pool.size < per_class:
                raise ValueError(f"class {c} has only {pool.size} examples")
            parts.append(rng.choice(pool, size=per_class, replace=False))
        labeled_idx = np.concatenate(parts)
    else:
        labeled_idx = rng.choice(len(train), size=spec.labeled_count, replace=False)
    labeled = train.subset(labeled_idx, "train")
    return train, val, labeled
