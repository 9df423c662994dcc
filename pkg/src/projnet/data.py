"""Dataset ingestion and synthetic desk-scale fixtures.

CIFAR-10 binary layout: records of 3073 bytes, one label byte (0-9) followed
by 3072 pixel bytes (1024 R, 1024 G, 1024 B, row-major). Pixels are scaled to
[0, 1]. Global contrast normalization (per-image mean/std) is the only
preprocessing implemented; whitening, if wanted, must be supplied externally.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .harness import Splits
from .projections import derive_rng

CIFAR_RECORD = 3073
CIFAR_CLASSES = 10


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64
    labels: np.ndarray  # (N,) int64
    split: str = ""
    preprocessing: str = "none"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.images.shape[0]


def load_cifar10(path, split: str = "") -> Dataset:
    """Load one .bin batch file, or every *.bin under a directory (sorted).
    Raises FormatError for truncated files or out-of-range labels; a bad file
    never yields a partial dataset."""
    path = os.fspath(path)
    if os.path.isdir(path):
        files = sorted(f for f in os.listdir(path) if f.endswith(".bin"))
        if not files:
            raise FormatError(f"no .bin files under {path}")
        parts = [_load_cifar10_file(os.path.join(path, f)) for f in files]
        images = np.concatenate([p[0] for p in parts])
        labels = np.concatenate([p[1] for p in parts])
    else:
        images, labels = _load_cifar10_file(path)
    return Dataset(images, labels, split=split)


def _load_cifar10_file(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    return parse_cifar10_bytes(blob, name=path)


def parse_cifar10_bytes(blob: bytes, name: str = "<bytes>") -> tuple[np.ndarray, np.ndarray]:
    if len(blob) == 0 or len(blob) % CIFAR_RECORD != 0:
        raise FormatError(
            f"{name}: size {len(blob)} is not a positive multiple of {CIFAR_RECORD}")
    raw = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = raw[:, 0].astype(np.int64)
    if labels.max(initial=0) >= CIFAR_CLASSES:
        bad = int(np.argmax(labels >= CIFAR_CLASSES))
        raise FormatError(f"{name}: record {bad} has label {labels[bad]} > 9")
    images = raw[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return images, labels


def cifar10_splits(path) -> Splits:
    """Standard binary distribution layout: data_batch_*.bin for training,
    test_batch.bin for testing, all in one directory."""
    path = os.fspath(path)
    train_files = sorted(f for f in os.listdir(path) if f.startswith("data_batch")
                         and f.endswith(".bin"))
    if not train_files:
        raise FormatError(f"no data_batch_*.bin files under {path}")
    parts = [_load_cifar10_file(os.path.join(path, f)) for f in train_files]
    train = Dataset(np.concatenate([p[0] for p in parts]),
                    np.concatenate([p[1] for p in parts]), split="train")
    test = load_cifar10(os.path.join(path, "test_batch.bin"), split="test")
    return Splits(train=train, test=test)


def gcn_normalize(ds: Dataset, epsilon: float = 1e-8) -> Dataset:
    """Global contrast normalization: per image, subtract its mean and divide
    by max(std, epsilon). Constant images become all-zero, never NaN."""
    flat = ds.images.reshape(ds.n, -1)
    mean = flat.mean(axis=1, keepdims=True)
    std = flat.std(axis=1, keepdims=True)
    out = (flat - mean) / np.maximum(std, epsilon)
    return Dataset(out.reshape(ds.images.shape), ds.labels.copy(),
                   split=ds.split, preprocessing="gcn")


def apply_whitening(ds: Dataset, matrix: np.ndarray) -> Dataset:
    """Apply an externally computed whitening matrix (D x D over the flattened
    pixels of one image). Whitening itself is out of scope; this is the hook
    for matrices produced elsewhere."""
    flat = ds.images.reshape(ds.n, -1)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (flat.shape[1], flat.shape[1]):
        raise FormatError(f"whitening matrix must be {flat.shape[1]}x"
                          f"{flat.shape[1]}, got {matrix.shape}")
    out = flat @ matrix.T
    return Dataset(out.reshape(ds.images.shape), ds.labels.copy(),
                   split=ds.split, preprocessing=ds.preprocessing + "+whiten")


def synthetic_dataset(kind: str, n: int, classes: int, seed: int,
                      size: int = 8, noise: float = 0.25, channels: int = 1,
                      split: str = "") -> Dataset:
    """Deterministic separable image set with balanced classes.

    blobs: one Gaussian bump per class, centers spaced on a ring.
    stripes: oriented gratings, one (orientation, phase) pair per class.
    The class pattern is replicated across channels; noise draws are
    independent per channel. With noise=0 every image of a class is
    identical, so a nearest-centroid rule is perfect.
    """
    if kind not in ("blobs", "stripes"):
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if n < classes:
        raise ValueError("need n >= classes")
    rng = derive_rng(seed, 11)
    labels = np.arange(n) % classes
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    patterns = np.zeros((classes, channels, size, size))
    for c in range(classes):
        if kind == "blobs":
            ang = 2.0 * np.pi * c / classes
            cy = size / 2.0 - 0.5 + (size / 4.0) * np.sin(ang)
            cx = size / 2.0 - 0.5 + (size / 4.0) * np.cos(ang)
            r2 = (yy - cy) ** 2 + (xx - cx) ** 2
            patterns[c, :] = np.exp(-r2 / (2.0 * 1.2 ** 2))
        else:
            ang = np.pi * c / classes
            phase = np.pi * (c % 2) / 2.0
            proj = np.cos(ang) * xx + np.sin(ang) * yy
            patterns[c, :] = np.sin(2.0 * np.pi * proj / 4.0 + phase)
    images = patterns[labels] + noise * rng.standard_normal(
        (n, channels, size, size))
    return Dataset(images, labels, split=split, preprocessing="none")


def synthetic_splits(kind: str, n_train: int, n_test: int, classes: int,
                     seed: int, size: int = 8, noise: float = 0.25,
                     channels: int = 1) -> Splits:
    return Splits(
        train=synthetic_dataset(kind, n_train, classes, seed, size=size,
                                noise=noise, channels=channels, split="train"),
        test=synthetic_dataset(kind, n_test, classes, seed + 1, size=size,
                               noise=noise, channels=channels, split="test"),
    )
