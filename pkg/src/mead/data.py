"""Dataset generation and ingestion."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .nn import LabeledDataset

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class FormatError(ValueError):
    """Raised on malformed IDX files."""


@dataclass
class GaussianSpec:
    n_per_class: int = 300
    mu0: tuple[float, float] = (1.0, 1.0)
    mu1: tuple[float, float] = (-1.0, -1.0)
    sigma: float = 1.0
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must be in (0, 1)")


def gen_gaussian_dataset(spec: GaussianSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Two isotropic Gaussian clusters, labeled by generating component,
    split train/test per the train fraction. Deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    x0 = rng.normal(spec.mu0, spec.sigma, size=(spec.n_per_class, 2))
    x1 = rng.normal(spec.mu1, spec.sigma, size=(spec.n_per_class, 2))
    X = np.vstack([x0, x1])
    y = np.concatenate([np.zeros(spec.n_per_class, dtype=int),
                        np.ones(spec.n_per_class, dtype=int)])
    order = rng.permutation(len(X))
    X, y = X[order], y[order]
    n_train = int(round(spec.train_fraction * len(X)))
    return (LabeledDataset(X[:n_train], y[:n_train]),
            LabeledDataset(X[n_train:], y[n_train:]))


def _read_idx_header(blob: bytes, path, expect_magic: int, n_dims: int):
    if len(blob) < 4:
        raise FormatError(f"{path}: truncated header at byte 0")
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic != expect_magic:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08x} at byte 0 "
            f"(expected 0x{expect_magic:08x})")
    header_len = 4 + 4 * n_dims
    if len(blob) < header_len:
        raise FormatError(f"{path}: truncated dimensions at byte {len(blob)}")
    dims = struct.unpack_from(f">{n_dims}I", blob, 4)
    return dims, header_len


def load_idx(images_path, labels_path, limit: int | None = None) -> LabeledDataset:
    """Parse big-endian IDX image/label files; pixels scaled to [0,1]."""
    with open(images_path, "rb") as f:
        img_blob = f.read()
    with open(labels_path, "rb") as f:
        lbl_blob = f.read()

    (n, rows, cols), img_off = _read_idx_header(
        img_blob, images_path, IDX_IMAGE_MAGIC, 3)
    expected = img_off + n * rows * cols
    if len(img_blob) != expected:
        raise FormatError(
            f"{images_path}: length {len(img_blob)} != declared {expected} "
            f"(mismatch from byte {img_off})")

    (n_lbl,), lbl_off = _read_idx_header(lbl_blob, labels_path, IDX_LABEL_MAGIC, 1)
    if len(lbl_blob) != lbl_off + n_lbl:
        raise FormatError(
            f"{labels_path}: length {len(lbl_blob)} != declared "
            f"{lbl_off + n_lbl} (mismatch from byte {lbl_off})")
    if n != n_lbl:
        raise FormatError(f"{images_path}: {n} images vs {n_lbl} labels")

    if limit is not None:
        n = min(n, limit)
    if n == 0:
        return _empty_dataset(rows * cols)
    images = np.frombuffer(img_blob, dtype=np.uint8, count=n * rows * cols,
                           offset=img_off)
    labels = np.frombuffer(lbl_blob, dtype=np.uint8, count=n, offset=lbl_off)
    return LabeledDataset(images.reshape(n, rows * cols) / 255.0,
                          labels.astype(int))


def _empty_dataset(d: int) -> LabeledDataset:
    ds = LabeledDataset.__new__(LabeledDataset)
    ds.inputs = np.empty((0, d))
    ds.labels = np.empty(0, dtype=int)
    return ds


def write_idx(images: np.ndarray, labels: np.ndarray,
              images_path, labels_path) -> None:
    """Write uint8 images [n, rows, cols] and labels [n] in IDX layout."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())
