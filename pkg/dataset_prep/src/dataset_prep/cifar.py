"""Readers for CIFAR-style binary batch archives.

Two record layouts are recognized:
    - cifar100: train.bin / test.bin, records of 1 coarse label byte +
      1 fine label byte + 3072 pixel bytes (three 32x32 channel planes)
    - cifar10: data_batch_1..5.bin / test_batch.bin, records of 1 label
      byte + 3072 pixel bytes

The archive may be an extracted directory or a .tar(.gz) file. Records
stream out in fixed-size chunks so a full-size archive never has to be
materialized as float pixels at once.
"""

from __future__ import annotations

import tarfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArchiveFormatError

IMAGE_SIDE = 32
CHANNELS = 3
PIXEL_BYTES = IMAGE_SIDE * IMAGE_SIDE * CHANNELS

LAYOUTS = {
    "cifar100": {
        "label_bytes": 2,
        "num_classes": 100,
        "train_files": ["train.bin"],
        "test_files": ["test.bin"],
    },
    "cifar10": {
        "label_bytes": 1,
        "num_classes": 10,
        "train_files": [f"data_batch_{i}.bin" for i in range(1, 6)],
        "test_files": ["test_batch.bin"],
    },
}


@dataclass
class ArchiveSource:
    layout: str
    files: dict[str, bytes]  # basename -> raw bytes

    @property
    def num_classes(self) -> int:
        return LAYOUTS[self.layout]["num_classes"]

    @property
    def record_size(self) -> int:
        return LAYOUTS[self.layout]["label_bytes"] + PIXEL_BYTES


def open_archive(path) -> ArchiveSource:
    """Load the archive's .bin members and detect the record layout."""
    path = Path(path)
    files: dict[str, bytes] = {}
    if path.is_dir():
        for member in path.rglob("*.bin"):
            files[member.name] = member.read_bytes()
    elif path.is_file():
        try:
            with tarfile.open(path, "r:*") as tar:
                for member in tar.getmembers():
                    if member.isfile() and member.name.endswith(".bin"):
                        data = tar.extractfile(member)
                        files[Path(member.name).name] = data.read()
        except tarfile.TarError as exc:
            raise ArchiveFormatError(f"cannot read archive {path}: {exc}") from exc
    else:
        raise ArchiveFormatError(f"archive not found: {path}")

    for layout, meta in LAYOUTS.items():
        needed = meta["train_files"] + meta["test_files"]
        if all(name in files for name in needed):
            return ArchiveSource(layout, {n: files[n] for n in needed})
    raise ArchiveFormatError(
        f"unrecognized archive contents: {sorted(files) or 'no .bin files'}")


def _check_sizes(source: ArchiveSource, names: list[str]) -> int:
    total = 0
    for name in names:
        size = len(source.files[name])
        if size == 0 or size % source.record_size != 0:
            raise ArchiveFormatError(
                f"{name}: malformed archive, partial record at byte "
                f"{size - size % source.record_size}")
        total += size // source.record_size
    return total


def record_count(source: ArchiveSource, split: str) -> int:
    return _check_sizes(source, LAYOUTS[source.layout][f"{split}_files"])


def iter_records(source: ArchiveSource, split: str, chunk: int = 2000):
    """Yield (images u8 (n, 32, 32, 3), fine labels) in order."""
    label_bytes = LAYOUTS[source.layout]["label_bytes"]
    num_classes = source.num_classes
    for name in LAYOUTS[source.layout][f"{split}_files"]:
        raw = np.frombuffer(source.files[name], dtype=np.uint8)
        records = raw.reshape(-1, source.record_size)
        for start in range(0, len(records), chunk):
            block = records[start:start + chunk]
            if label_bytes == 2:
                coarse, fine = block[:, 0], block[:, 1]
                bad = np.nonzero((coarse >= 20) | (fine >= num_classes))[0]
            else:
                fine = block[:, 0]
                bad = np.nonzero(fine >= num_classes)[0]
            if len(bad):
                offset = (start + int(bad[0])) * source.record_size
                raise ArchiveFormatError(
                    f"{name}: invalid label in record at byte {offset}")
            pixels = block[:, label_bytes:]
            images = pixels.reshape(-1, CHANNELS, IMAGE_SIDE, IMAGE_SIDE)
            yield images.transpose(0, 2, 3, 1), fine.astype(np.int64)
