"""Synthetic dataset generators and the IDX image-file format.

No downloads: blobs and spirals cover separable / non-linear classification,
patch images give a small conv-friendly 10-class task. IDX files allow
plugging in small real image sets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.x) != len(self.y):
            raise ValueError("inputs and labels must have equal length")

    def __len__(self):
        return len(self.y)


def gaussian_blobs(n: int, classes: int, dim: int = 2, spread: float = 0.15,
                   seed: int = 0, sample_seed: int | None = None) -> Dataset:
    """Linearly separable class clusters on random unit-ball centers.

    seed fixes the task (the centers); sample_seed varies the draws, so a
    train/eval pair shares centers by using the same seed with different
    sample seeds. Centers sit equally spaced on a randomly rotated unit
    circle, so classes are separated by at least 2*sin(pi/classes).
    """
    if dim < 2:
        raise ValueError("need at least 2 dimensions")
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(classes) / classes + rng.uniform(0, 2 * np.pi)
    centers = np.zeros((classes, dim))
    centers[:, 0] = np.cos(angles)
    centers[:, 1] = np.sin(angles)
    srng = rng if sample_seed is None else np.random.default_rng(sample_seed)
    y = np.arange(n) % classes
    x = centers[y] + srng.normal(0.0, spread, (n, dim))
    perm = srng.permutation(n)
    return Dataset(x[perm], y[perm])


def spirals(n: int, classes: int = 3, noise: float = 0.1, seed: int = 0,
            sample_seed: int | None = None) -> Dataset:
    """Interleaved 2-D spiral arms, one per class (the arms are fixed;
    seed/sample_seed only vary the noise)."""
    rng = np.random.default_rng(seed if sample_seed is None else sample_seed)
    per = n // classes
    xs, ys = [], []
    for c in range(classes):
        t = np.linspace(0.1, 1.0, per)
        angle = 2.0 * np.pi * (t * 1.5 + c / classes)
        pts = np.stack([t * np.cos(angle), t * np.sin(angle)], axis=1)
        xs.append(pts + rng.normal(0.0, noise * t[:, None], pts.shape))
        ys.append(np.full(per, c))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    perm = rng.permutation(len(y))
    return Dataset(x[perm], y[perm])


def patch_images(n: int, classes: int = 10, size: int = 8, channels: int = 1,
                 noise: float = 0.25, seed: int = 0,
                 sample_seed: int | None = None) -> Dataset:
    """Small images: one random template per class plus Gaussian noise.

    seed fixes the class templates; sample_seed varies the noise draws.
    """
    rng = np.random.default_rng(seed)
    templates = rng.normal(0.0, 1.0, (classes, channels, size, size))
    srng = rng if sample_seed is None else np.random.default_rng(sample_seed)
    y = np.arange(n) % classes
    x = templates[y] + srng.normal(0.0, noise, (n, channels, size, size))
    perm = srng.permutation(n)
    return Dataset(x[perm], y[perm])


_IDX_DTYPES = {
    0x08: np.dtype(">u1"), 0x09: np.dtype(">i1"), 0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"), 0x0D: np.dtype(">f4"), 0x0E: np.dtype(">f8"),
}


def load_idx(path) -> np.ndarray:
    """Read an IDX-format array (big-endian header: 0, 0, dtype, ndim, dims...)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 or data[0] != 0 or data[1] != 0:
        raise ValueError(f"{path}: not an IDX file")
    code, ndim = data[2], data[3]
    if code not in _IDX_DTYPES:
        raise ValueError(f"{path}: unknown IDX dtype code 0x{code:02x}")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    dtype = _IDX_DTYPES[code]
    count = int(np.prod(dims)) if dims else 0
    start = 4 + 4 * ndim
    if len(data) < start + count * dtype.itemsize:
        raise ValueError(f"{path}: truncated IDX payload")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=start)
    return arr.reshape(dims).astype(dtype.newbyteorder("="))


def save_idx(path, arr: np.ndarray):
    """Write an array in IDX format (ubyte for uint8, float32/64 otherwise)."""
    arr = np.asarray(arr)
    if arr.dtype == np.uint8:
        code, dtype = 0x08, np.dtype(">u1")
    elif arr.dtype == np.float32:
        code, dtype = 0x0D, np.dtype(">f4")
    else:
        code, dtype = 0x0E, np.dtype(">f8")
        arr = arr.astype(np.float64)
    with open(path, "wb") as f:
        f.write(bytes([0, 0, code, arr.ndim]))
        f.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        f.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def idx_dataset(images_path, labels_path, normalize: bool = True) -> Dataset:
    """Pair an IDX image file with an IDX label file."""
    x = load_idx(images_path).astype(np.float64)
    y = load_idx(labels_path).astype(np.int64)
    if x.ndim == 3:
        x = x[:, None, :, :]
    if normalize and x.max() > 1.0:
        x = x / 255.0
    return Dataset(x, y)
