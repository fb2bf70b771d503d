"""Streaming writer for the FDS dataset format.

Layout (little-endian): magic "FDS1", u8 rank, rank x u32 dims, f32
sample values in [0, 1] row-major, then dim0 u32 labels. This writer is
independent of the consumer engine's reader; the two meet only at the
bytes.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FDS1"


class FdsWriter:
    """Write one FDS file incrementally: header, sample chunks, labels."""

    def __init__(self, path, shape: tuple[int, ...]):
        if len(shape) not in (2, 4):
            raise ValueError("FDS rank must be 2 or 4")
        self.shape = tuple(int(d) for d in shape)
        self._written = 0
        self._labels: list[np.ndarray] = []
        self._fh = open(path, "wb")
        self._fh.write(MAGIC)
        self._fh.write(struct.pack("<B", len(self.shape)))
        self._fh.write(struct.pack(f"<{len(self.shape)}I", *self.shape))

    def add(self, samples: np.ndarray, labels: np.ndarray) -> None:
        samples = np.asarray(samples)
        if samples.shape[1:] != self.shape[1:]:
            raise ValueError(f"chunk shape {samples.shape[1:]} != {self.shape[1:]}")
        if samples.size and (samples.min() < 0.0 or samples.max() > 1.0):
            raise ValueError("FDS samples must lie in [0, 1]")
        self._fh.write(np.ascontiguousarray(samples, dtype="<f4").tobytes())
        self._labels.append(np.asarray(labels))
        self._written += samples.shape[0]

    def close(self) -> None:
        if self._written != self.shape[0]:
            self._fh.close()
            raise ValueError(
                f"wrote {self._written} samples, header promised {self.shape[0]}")
        labels = np.concatenate(self._labels) if self._labels else np.array([], dtype=np.uint32)
        self._fh.write(np.ascontiguousarray(labels, dtype="<u4").tobytes())
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()


def read_fds(path):
    """Minimal reader used for self-checks; returns (samples f32, labels)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise ValueError("bad FDS magic")
    rank = buf[4]
    dims = struct.unpack_from(f"<{rank}I", buf, 5)
    offset = 5 + 4 * rank
    count = int(np.prod(dims))
    samples = np.frombuffer(buf, dtype="<f4", count=count, offset=offset).reshape(dims)
    labels = np.frombuffer(buf, dtype="<u4", count=dims[0], offset=offset + 4 * count)
    return samples, labels.astype(np.int64)
