from __future__ import annotations

import numpy as np
import pytest

from maskscribe.mask_core import SegmentationMask


def make_mask(rows) -> SegmentationMask:
    return SegmentationMask(np.array(rows, dtype=np.int64))


def random_mask(rng: np.random.Generator, h: int, w: int, density: float) -> SegmentationMask:
    building = rng.random((h, w)) < density
    cats = rng.integers(1, 4, size=(h, w))
    return SegmentationMask(np.where(building, cats, 0))


def blob_mask(rng: np.random.Generator, h: int, w: int, n_blobs: int) -> SegmentationMask:
    """Random rectangles of random categories painted onto a background."""
    labels = np.zeros((h, w), dtype=np.int64)
    for _ in range(n_blobs):
        bh, bw = rng.integers(1, max(2, h // 6), endpoint=True), rng.integers(1, max(2, w // 6), endpoint=True)
        v, u = rng.integers(0, h - bh + 1), rng.integers(0, w - bw + 1)
        labels[v : v + bh, u : u + bw] = rng.integers(1, 4)
    return SegmentationMask(labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
