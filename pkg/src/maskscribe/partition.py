"""Five-zone spatial partition of the image grid and majority-overlap assignment."""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class Zone(enum.IntEnum):
    # value order doubles as the tie-break priority (lower wins)
    CENTRAL = 0
    TOP = 1
    BOTTOM = 2
    LEFT = 3
    RIGHT = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Zone":
        return cls[label.upper()]


# serialization / presentation order
ZONE_ORDER = (Zone.TOP, Zone.CENTRAL, Zone.BOTTOM, Zone.LEFT, Zone.RIGHT)


@dataclass(frozen=True)
class ZoneGeometry:
    """Zone boundaries for an H x W image.

    Central is ``r1 <= v < r2`` and ``c1 <= u < c2``. Left and Right are
    full-height strips ``u < c1`` and ``u >= c2``; Top and Bottom are the
    bands above and below Central between the strips.
    """

    height: int
    width: int

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError(f"image dimensions must be positive, got {self.height}x{self.width}")

    # integer arithmetic keeps floor() exact for any size
    @property
    def r1(self) -> int:
        return self.height // 4

    @property
    def r2(self) -> int:
        return (3 * self.height) // 4

    @property
    def c1(self) -> int:
        return self.width // 5

    @property
    def c2(self) -> int:
        return (4 * self.width) // 5

    def zone_areas(self) -> dict[Zone, int]:
        mid = self.c2 - self.c1
        return {
            Zone.TOP: self.r1 * mid,
            Zone.CENTRAL: (self.r2 - self.r1) * mid,
            Zone.BOTTOM: (self.height - self.r2) * mid,
            Zone.LEFT: self.c1 * self.height,
            Zone.RIGHT: (self.width - self.c2) * self.height,
        }

    def zone_map(self) -> np.ndarray:
        """Read-only H x W array of zone codes."""
        return _zone_map(self.height, self.width)


@functools.lru_cache(maxsize=32)
def _zone_map(height: int, width: int) -> np.ndarray:
    geom = ZoneGeometry(height, width)
    zmap = np.empty((height, width), dtype=np.uint8)
    zmap[:, :] = Zone.CENTRAL
    zmap[: geom.r1, :] = Zone.TOP
    zmap[geom.r2 :, :] = Zone.BOTTOM
    zmap[:, : geom.c1] = Zone.LEFT
    zmap[:, geom.c2 :] = Zone.RIGHT
    zmap.setflags(write=False)
    return zmap


def zone_of_pixel(coord: tuple[int, int], geom: ZoneGeometry) -> Zone:
    u, v = coord
    if not (0 <= u < geom.width and 0 <= v < geom.height):
        raise ValueError(f"pixel (u={u}, v={v}) outside {geom.width}x{geom.height} image")
    if u < geom.c1:
        return Zone.LEFT
    if u >= geom.c2:
        return Zone.RIGHT
    if v < geom.r1:
        return Zone.TOP
    if v >= geom.r2:
        return Zone.BOTTOM
    return Zone.CENTRAL


def pick_majority(counts: Iterable[int]) -> Zone:
    """Zone with the most pixels from per-zone counts indexed by Zone code."""
    counts = list(counts)
    # max() keeps the first maximum, i.e. the highest-priority zone
    best = max(range(len(Zone)), key=lambda z: (counts[z], -z))
    return Zone(best)


def assign_zone(instance_pixels, geom: ZoneGeometry) -> Zone:
    """Majority-overlap zone of an instance given its ``(u, v)`` pixels.

    Ties go to Central > Top > Bottom > Left > Right.
    """
    pts = np.asarray(instance_pixels, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("cannot assign a zone to an empty pixel list")
    u, v = pts[:, 0], pts[:, 1]
    if u.min() < 0 or v.min() < 0 or u.max() >= geom.width or v.max() >= geom.height:
        raise ValueError(f"instance pixels fall outside {geom.width}x{geom.height} image")
    zones = geom.zone_map()[v, u]
    return pick_majority(np.bincount(zones, minlength=len(Zone)))
