"""Labeled datasets, the FDS binary file format, and synthetic benchmarks.

FDS layout (all little-endian):
    magic "FDS1", u8 rank (2 or 4), rank x u32 dims (dim0 = sample
    count; rank 4 = N x H x W x C), dim0*... f32 values in [0, 1]
    row-major, then dim0 u32 labels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

FDS_MAGIC = b"FDS1"


@dataclass
class LabeledDataset:
    """Samples (flat vectors or N x H x W x C images) with integer labels."""

    samples: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim not in (2, 4):
            raise ValueError("samples must be (N, D) or (N, H, W, C)")
        if len(self.labels) != self.samples.shape[0]:
            raise ValueError("sample/label counts differ")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int] | None:
        return tuple(self.samples.shape[1:]) if self.samples.ndim == 4 else None

    @property
    def flat(self) -> np.ndarray:
        """(N, D) view, flattening image samples row-major."""
        return self.samples.reshape(self.samples.shape[0], -1)

    @property
    def class_ids(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, index) -> "LabeledDataset":
        return LabeledDataset(self.samples[index], self.labels[index], self.split)

    def restrict_to(self, class_ids) -> "LabeledDataset":
        return self.subset(np.isin(self.labels, np.asarray(class_ids)))

    def indices_of(self, class_id: int) -> np.ndarray:
        return np.nonzero(self.labels == class_id)[0]


def check_dense_labels(dataset: LabeledDataset) -> int:
    """Require labels dense in [0, num_classes); returns the class count."""
    ids = dataset.class_ids
    if len(ids) == 0 or ids[0] != 0 or ids[-1] != len(ids) - 1:
        raise ValueError("labels must be dense in [0, num_classes)")
    return len(ids)


def write_fds(path, dataset: LabeledDataset) -> None:
    samples = dataset.samples
    if samples.size and (samples.min() < 0.0 or samples.max() > 1.0):
        raise ValueError("FDS samples must lie in [0, 1]")
    rank = samples.ndim
    with open(path, "wb") as fh:
        fh.write(FDS_MAGIC)
        fh.write(struct.pack("<B", rank))
        fh.write(struct.pack(f"<{rank}I", *samples.shape))
        fh.write(np.ascontiguousarray(samples, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(dataset.labels, dtype="<u4").tobytes())


def read_fds(path, split: str = "train") -> LabeledDataset:
    with open(path, "rb") as fh:
        buf = fh.read()
    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(buf):
            raise FormatError(f"truncated FDS file at byte {offset}")
        piece = buf[offset:offset + n]
        offset += n
        return piece

    if take(4) != FDS_MAGIC:
        raise FormatError("bad FDS magic")
    (rank,) = struct.unpack("<B", take(1))
    if rank not in (2, 4):
        raise FormatError(f"FDS rank must be 2 or 4, got {rank}")
    dims = struct.unpack(f"<{rank}I", take(4 * rank))
    count = int(np.prod(dims))
    samples = np.frombuffer(take(count * 4), dtype="<f4").reshape(dims)
    labels = np.frombuffer(take(dims[0] * 4), dtype="<u4")
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes in FDS file")
    return LabeledDataset(samples.astype(np.float64), labels.astype(np.int64), split)


@dataclass
class GaussianSpec:
    """Synthetic benchmark: one Gaussian cluster per class.

    Class means are random unit vectors; samples are mean + spread *
    noise, then the whole dataset is affinely squashed into [0, 1] so it
    round-trips through FDS files. Larger spread means harder classes.
    """

    num_classes: int
    dim: int
    train_per_class: int
    test_per_class: int
    spread: float = 0.3
    seed: int = 0


def make_gaussian_dataset(spec: GaussianSpec) -> tuple[LabeledDataset, LabeledDataset]:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 7]))
    means = rng.normal(size=(spec.num_classes, spec.dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)

    def draw(per_class: int, split: str) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = [], []
        for cid in range(spec.num_classes):
            noise = rng.normal(size=(per_class, spec.dim))
            xs.append(means[cid] + spec.spread * noise)
            ys.append(np.full(per_class, cid))
        return np.concatenate(xs), np.concatenate(ys)

    train_x, train_y = draw(spec.train_per_class, "train")
    test_x, test_y = draw(spec.test_per_class, "test")
    lo = min(train_x.min(), test_x.min())
    hi = max(train_x.max(), test_x.max())
    train_x = (train_x - lo) / (hi - lo)
    test_x = (test_x - lo) / (hi - lo)
    return (LabeledDataset(train_x, train_y, "train"),
            LabeledDataset(test_x, test_y, "test"))
