"""Per-zone count tables and dataset-level analytics (class balance, sizes,
co-occurrence, word frequency)."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .mask_core import BUILDING_CATEGORIES, DamageCategory, SegmentationMask
from .partition import ZONE_ORDER, Zone, ZoneGeometry

SPATIAL_KEYWORDS = ("top", "bottom", "left", "right", "central")
_TOKEN_RE = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class ZoneStats:
    """Pixel and instance counts for one zone, or for the whole image (zone=None)."""

    zone: Zone | None
    pixel_counts: Mapping[DamageCategory, int]
    instance_counts: Mapping[DamageCategory, int]

    @property
    def name(self) -> str:
        return self.zone.label if self.zone is not None else "global"

    @property
    def total_instances(self) -> int:
        return sum(self.instance_counts.values())

    def to_dict(self) -> dict:
        return {
            "zone": self.name,
            "pixel_counts": {c.label: int(self.pixel_counts[c]) for c in DamageCategory},
            "instance_counts": {c.label: int(self.instance_counts[c]) for c in BUILDING_CATEGORIES},
        }


@dataclass(frozen=True)
class SceneStats:
    zones: dict[Zone, ZoneStats]
    total: ZoneStats

    def ordered(self) -> list[ZoneStats]:
        return [self.zones[z] for z in ZONE_ORDER]


def compute_zone_stats(mask: SegmentationMask, instances, geom: ZoneGeometry) -> SceneStats:
    """Tally pixels by the zone they fall in and instances by their assigned zone."""
    if (geom.height, geom.width) != mask.shape:
        raise ValueError(
            f"geometry {geom.height}x{geom.width} does not match mask {mask.height}x{mask.width}"
        )
    nz, nc = len(Zone), len(DamageCategory)
    joint = geom.zone_map().astype(np.int64) * nc + mask.labels
    pix = np.bincount(joint.ravel(), minlength=nz * nc).reshape(nz, nc)
    inst = np.zeros((nz, nc), dtype=np.int64)
    for b in instances:
        if b.zone is None:
            raise ValueError(f"instance {b.id} has no assigned zone")
        inst[b.zone, b.category] += 1
    zones = {
        z: ZoneStats(
            z,
            {c: int(pix[z, c]) for c in DamageCategory},
            {c: int(inst[z, c]) for c in BUILDING_CATEGORIES},
        )
        for z in Zone
    }
    total = ZoneStats(
        None,
        {c: int(pix[:, c].sum()) for c in DamageCategory},
        {c: int(inst[:, c].sum()) for c in BUILDING_CATEGORIES},
    )
    return SceneStats(zones, total)


def class_balance(splits: Mapping[str, Sequence[SegmentationMask]]) -> dict[str, dict[str, float]]:
    """Fraction of building pixels per category, for each split."""
    out = {}
    for split, masks in splits.items():
        if not masks:
            raise ValueError(f"split {split!r} has no masks")
        counts = np.zeros(len(DamageCategory), dtype=np.int64)
        for m in masks:
            counts += np.bincount(m.labels.ravel(), minlength=len(DamageCategory))
        building = int(counts[1:].sum())
        if building == 0:
            raise ValueError(f"split {split!r} has no building pixels")
        out[split] = {c.label: int(counts[c]) / building for c in BUILDING_CATEGORIES}
    return out


def size_distribution(instances: Iterable) -> dict[str, dict]:
    """Pixel-area summary per category; quantiles use linear interpolation."""
    areas: dict[DamageCategory, list[int]] = {c: [] for c in BUILDING_CATEGORIES}
    for b in instances:
        areas[b.category].append(b.pixel_count)
    out = {}
    for cat, vals in areas.items():
        if not vals:
            out[cat.label] = {"count": 0, "min": None, "q1": None, "median": None, "q3": None, "max": None}
            continue
        q = np.percentile(np.asarray(vals, dtype=float), [0, 25, 50, 75, 100], method="linear")
        out[cat.label] = {
            "count": len(vals),
            "min": float(q[0]),
            "q1": float(q[1]),
            "median": float(q[2]),
            "q3": float(q[3]),
            "max": float(q[4]),
        }
    return out


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """``probability[i][j]`` = P(category j present | category i present)."""

    categories: tuple[DamageCategory, ...]
    probability: list[list[float]]
    support: list[int]
    images: int = 0

    def get(self, given: DamageCategory, present: DamageCategory) -> float:
        return self.probability[self.categories.index(given)][self.categories.index(present)]

    def to_dict(self) -> dict:
        labels = [c.label for c in self.categories]
        return {
            "images": self.images,
            "categories": labels,
            "support": dict(zip(labels, self.support)),
            "probability": {
                row: dict(zip(labels, self.probability[i])) for i, row in enumerate(labels)
            },
        }


def presence(mask: SegmentationMask, threshold: int = 1) -> dict[DamageCategory, bool]:
    counts = np.bincount(mask.labels.ravel(), minlength=len(DamageCategory))
    return {c: bool(counts[c] >= threshold) for c in BUILDING_CATEGORIES}


def cooccurrence(masks: Iterable[SegmentationMask], threshold: int = 1) -> CooccurrenceMatrix:
    if threshold < 1:
        raise ValueError("presence threshold must be >= 1")
    cats = BUILDING_CATEGORIES
    both = np.zeros((3, 3), dtype=np.int64)
    images = 0
    for m in masks:
        images += 1
        present = presence(m, threshold)
        p = np.array([present[c] for c in cats], dtype=np.int64)
        both += np.outer(p, p)
    if images == 0:
        raise ValueError("co-occurrence needs at least one mask")
    support = [int(both[i, i]) for i in range(3)]
    prob = [
        [int(both[i, j]) / support[i] if support[i] else 0.0 for j in range(3)]
        for i in range(3)
    ]
    return CooccurrenceMatrix(cats, prob, support, images)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass
class WordFrequency:
    counts: Counter = field(default_factory=Counter)

    @property
    def spatial(self) -> dict[str, int]:
        return {k: self.counts.get(k, 0) for k in SPATIAL_KEYWORDS}

    def to_dict(self, top: int | None = None) -> dict:
        ranked = sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if top is not None:
            ranked = ranked[:top]
        return {"tokens": dict(ranked), "spatial": self.spatial}


def word_frequency(corpus: Iterable[str]) -> WordFrequency:
    counts: Counter = Counter()
    for text in corpus:
        counts.update(tokenize(text))
    return WordFrequency(counts)
