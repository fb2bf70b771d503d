"""CutMix virtual-category generation.

A virtual sample splices a rectangular patch of one image onto an image
of a different class: out = M * x_a + (1 - M) * x_b, with M a binary
mask whose zero region covers exactly half the pixels, so the result
carries semantics from both sources. Each unordered pair of real
classes gets its own virtual label, appended after the real ones.

Flat feature vectors are handled as 1 x D images, so the zero region is
a contiguous run of coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MaskSpec:
    """A binary H x W mask: 1 everywhere except a zero rectangle.

    The rectangle area must equal floor(H*W/2) exactly.
    """

    height: int
    width: int
    zero_region: tuple[int, int, int, int]  # top, left, rect_h, rect_w

    def __post_init__(self):
        top, left, rect_h, rect_w = self.zero_region
        if self.height < 1 or self.width < 1:
            raise ValueError("mask dimensions must be positive")
        if rect_h < 1 or rect_w < 1:
            raise ValueError("zero region must be nonempty")
        if top < 0 or left < 0 or top + rect_h > self.height or left + rect_w > self.width:
            raise ValueError("zero region exceeds mask bounds")
        if rect_h * rect_w != (self.height * self.width) // 2:
            raise ValueError("zero region must cover exactly half the pixels")

    def as_array(self) -> np.ndarray:
        mask = np.ones((self.height, self.width))
        top, left, rect_h, rect_w = self.zero_region
        mask[top:top + rect_h, left:left + rect_w] = 0.0
        return mask


def _band_rect(area: int, height: int, width: int, tall: bool) -> tuple[int, int] | None:
    """Widest (or tallest) rectangle of exactly `area` fitting H x W."""
    if tall:
        for h in range(min(height, area), 0, -1):
            if area % h == 0 and area // h <= width:
                return h, area // h
    else:
        for w in range(min(width, area), 0, -1):
            if area % w == 0 and area // w <= height:
                return area // w, w
    return None


def make_mask(height: int, width: int, rng_seed) -> MaskSpec:
    """Random half-area mask: orientation by one bit, offset uniform.

    Raises ValueError when H*W < 2 or when no axis-aligned rectangle of
    exactly floor(H*W/2) pixels fits (possible for some odd-by-odd
    sizes, e.g. 3x5).
    """
    if height * width < 2:
        raise ValueError("mask needs at least 2 pixels")
    rng = np.random.default_rng(rng_seed)
    area = (height * width) // 2
    tall = _band_rect(area, height, width, tall=True)
    wide = _band_rect(area, height, width, tall=False)
    if tall is None and wide is None:
        raise ValueError(
            f"no rectangle of exactly {area} pixels fits a {height}x{width} mask")
    pick_tall = bool(rng.integers(0, 2))
    if pick_tall:
        rect_h, rect_w = tall if tall is not None else wide
    else:
        rect_h, rect_w = wide if wide is not None else tall
    top = int(rng.integers(0, height - rect_h + 1))
    left = int(rng.integers(0, width - rect_w + 1))
    return MaskSpec(height, width, (top, left, rect_h, rect_w))


def cutmix(x_a: np.ndarray, x_b: np.ndarray, mask: MaskSpec | np.ndarray) -> np.ndarray:
    """Combine two images: x_a where the mask is 1, x_b where it is 0.

    Accepts (H, W) or (H, W, C) arrays; a raw binary array may stand in
    for a MaskSpec (used by tests to bypass the half-area invariant).
    """
    x_a = np.asarray(x_a, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    if x_a.shape != x_b.shape:
        raise ValueError(f"source shapes differ: {x_a.shape} vs {x_b.shape}")
    m = mask.as_array() if isinstance(mask, MaskSpec) else np.asarray(mask, dtype=np.float64)
    if x_a.shape[:2] != m.shape:
        raise ValueError(f"mask shape {m.shape} does not match images {x_a.shape[:2]}")
    if x_a.ndim == 3:
        m = m[:, :, None]
    elif x_a.ndim != 2:
        raise ValueError("images must be (H, W) or (H, W, C)")
    return np.where(m == 1.0, x_a, x_b)


def assign_virtual_labels(base_class_count: int,
                          pairs: list[tuple[int, int]]) -> dict[tuple[int, int], int]:
    """Map unordered class pairs to consecutive labels >= base_class_count.

    The table is a bijection determined by sorted pair order, so any
    insertion order of the same pair set yields the same labels.
    """
    normalized = []
    for a, b in pairs:
        if a == b:
            raise ValueError(f"virtual pair must mix two distinct classes, got ({a}, {b})")
        normalized.append((min(a, b), max(a, b)))
    if len(set(normalized)) != len(normalized):
        raise ValueError("duplicate virtual pair")
    return {pair: base_class_count + i for i, pair in enumerate(sorted(normalized))}


@dataclass
class VirtualSample:
    """A generated sample for one virtual category."""

    image: np.ndarray
    virtual_label: int
    source_pair: tuple[int, int]


def make_virtual_samples(samples: np.ndarray, labels: np.ndarray,
                         pairs: list[tuple[int, int]],
                         label_table: dict[tuple[int, int], int],
                         per_pair: int, rng_seed) -> list[VirtualSample]:
    """CutMix `per_pair` samples for every class pair.

    Samples may be images (N, H, W[, C]) or flat vectors (N, D); flat
    data is mixed as 1 x D images, so the spliced region is a contiguous
    coordinate run.
    """
    rng = np.random.default_rng(rng_seed)
    flat = samples.ndim == 2
    out = []
    for pair in pairs:
        a_idx = np.nonzero(labels == pair[0])[0]
        b_idx = np.nonzero(labels == pair[1])[0]
        if len(a_idx) == 0 or len(b_idx) == 0:
            raise ValueError(f"no samples for pair {pair}")
        for _ in range(per_pair):
            x_a = samples[rng.choice(a_idx)]
            x_b = samples[rng.choice(b_idx)]
            if flat:
                mask = make_mask(1, x_a.shape[0], rng)
                mixed = cutmix(x_a[None, :], x_b[None, :], mask)[0]
            else:
                mask = make_mask(x_a.shape[0], x_a.shape[1], rng)
                mixed = cutmix(x_a, x_b, mask)
            out.append(VirtualSample(mixed, label_table[pair], pair))
    return out
