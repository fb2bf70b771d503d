"""Archive-to-FDS conversion and the class-split maker."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .cifar import IMAGE_SIDE, iter_records, open_archive, record_count
from .fds import FdsWriter


@dataclass
class ConversionManifest:
    """Everything downstream tooling needs to trust a converted dataset."""

    source: str
    layout: str
    class_count: int
    image_side: int
    train_counts: list[int]
    test_counts: list[int]
    outputs: dict[str, str]
    checksums: dict[str, str]
    downscale: int | None = None
    class_assignment: dict | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ConversionManifest":
        return cls(**json.loads(text))


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _downscale(images: np.ndarray, side: int) -> np.ndarray:
    """Area-average pooling from 32x32 to side x side."""
    if IMAGE_SIDE % side != 0:
        raise ValueError(f"downscale side {side} must divide {IMAGE_SIDE}")
    k = IMAGE_SIDE // side
    n, _, _, c = images.shape
    pooled = images.reshape(n, side, k, side, k, c).mean(axis=(2, 4))
    return pooled


def convert(archive_path, out_dir, downscale: int | None = None) -> ConversionManifest:
    """Write train.fds / test.fds (pixels scaled to [0, 1]) plus a manifest.

    Conversion is deterministic and streams in chunks, so reruns produce
    byte-identical outputs and memory stays bounded for full archives.
    """
    source = open_archive(archive_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    side = downscale or IMAGE_SIDE
    outputs, checksums = {}, {}
    counts = {}
    for split in ("train", "test"):
        n = record_count(source, split)
        path = out_dir / f"{split}.fds"
        per_class = np.zeros(source.num_classes, dtype=np.int64)
        with FdsWriter(path, (n, side, side, 3)) as writer:
            for images, labels in iter_records(source, split):
                scaled = images.astype(np.float64) / 255.0
                if downscale:
                    scaled = _downscale(scaled, side)
                writer.add(scaled.astype(np.float32), labels)
                per_class += np.bincount(labels, minlength=source.num_classes)
        outputs[split] = str(path)
        checksums[split] = _sha256(path)
        counts[split] = per_class.tolist()

    manifest = ConversionManifest(
        source=str(archive_path), layout=source.layout,
        class_count=source.num_classes, image_side=side,
        train_counts=counts["train"], test_counts=counts["test"],
        outputs=outputs, checksums=checksums, downscale=downscale)
    (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def make_split(manifest: ConversionManifest, base_count: int, way: int,
               sessions: int, seed: int, out_path) -> dict:
    """Seeded class-to-session assignment consumable by the engine.

    Every class lands in exactly one session; the arithmetic must cover
    the archive's class count exactly.
    """
    if base_count + way * sessions != manifest.class_count:
        raise ValueError(
            f"{base_count} base + {way}x{sessions} incremental != "
            f"{manifest.class_count} classes")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    order = [int(c) for c in rng.permutation(manifest.class_count)]
    split = {
        "seed": int(seed),
        "class_count": manifest.class_count,
        "way": way,
        "base": sorted(order[:base_count]),
        "sessions": [sorted(order[base_count + t * way: base_count + (t + 1) * way])
                     for t in range(sessions)],
    }
    Path(out_path).write_text(json.dumps(split, indent=2, sort_keys=True) + "\n")
    return split
