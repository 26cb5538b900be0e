"""Building instance extraction (connected components) and PCA oriented boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .mask_core import BUILDING_CATEGORIES, DamageCategory, SegmentationMask
from .partition import Zone, ZoneGeometry, pick_majority

DEGENERATE_RTOL = 1e-9
# long-edge swap only when h exceeds w by more than this (keeps ties stable)
SWAP_ATOL = 1e-9

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def corners(self) -> np.ndarray:
        """(4, 2) corner coordinates in (u, v)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        axes = np.array([[c, s], [-s, c]])
        local = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) * [self.w / 2, self.h / 2]
        return local @ axes + [self.cx, self.cy]

    def local_coords(self, points: np.ndarray) -> np.ndarray:
        """Express ``(u, v)`` points in the box frame (long axis first)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        d = np.asarray(points, dtype=float) - [self.cx, self.cy]
        return np.column_stack([d @ [c, s], d @ [-s, c]])

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True, eq=False)
class BuildingInstance:
    id: int
    category: DamageCategory
    pixels: np.ndarray  # (N, 2) int array of (u, v), raster order
    zone: Zone | None = None
    obb: OrientedBox | None = None

    @property
    def pixel_count(self) -> int:
        return len(self.pixels)

    @property
    def aabb(self) -> tuple[int, int, int, int]:
        u, v = self.pixels[:, 0], self.pixels[:, 1]
        return int(u.min()), int(v.min()), int(u.max()), int(v.max())


def wrap_half_pi(theta: float) -> float:
    """Map an angle into [-pi/2, pi/2)."""
    wrapped = (theta + math.pi / 2) % math.pi - math.pi / 2
    # float modulo can land exactly on +pi/2 for inputs just below -pi/2
    return -math.pi / 2 if wrapped >= math.pi / 2 else wrapped


def label_components(mask: SegmentationMask, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Label same-category components; ids are 1-based in first-encounter raster order."""
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _STRUCTURES[connectivity]
    combined = np.zeros(mask.shape, dtype=np.int64)
    offset = 0
    for cat in BUILDING_CATEGORIES:
        labels, n = ndimage.label(mask.labels == cat, structure=structure)
        if n:
            combined[labels > 0] = labels[labels > 0] + offset
            offset += n
    if offset == 0:
        return combined, 0
    flat = combined.ravel()
    ids, first = np.unique(flat, return_index=True)
    # ids[0] is background when present; rank the rest by first raster index
    keep = ids > 0
    ids, first = ids[keep], first[keep]
    remap = np.zeros(offset + 1, dtype=np.int64)
    remap[ids[np.argsort(first, kind="stable")]] = np.arange(1, len(ids) + 1)
    return remap[combined], len(ids)


def extract_instances(mask: SegmentationMask, connectivity: int = 8) -> list[BuildingInstance]:
    """One instance per maximal same-category connected component, no zone/obb yet."""
    labels, n = label_components(mask, connectivity)
    if n == 0:
        return []
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n + 1)
    bounds = np.cumsum(counts)
    width = mask.width
    cats = mask.labels.ravel()
    out = []
    for i in range(1, n + 1):
        idx = order[bounds[i - 1] : bounds[i]]
        pixels = np.column_stack([idx % width, idx // width])
        out.append(BuildingInstance(id=i - 1, category=DamageCategory(int(cats[idx[0]])), pixels=pixels))
    return out


def fit_obb(pixels: np.ndarray | BuildingInstance) -> OrientedBox:
    """PCA oriented box around pixel centers, long edge first.

    The principal direction is the first right singular vector of the centered
    coordinates; extents are padded by one pixel for the unit footprint.
    """
    if isinstance(pixels, BuildingInstance):
        pixels = pixels.pixels
    pts = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("cannot fit a box to zero pixels")
    mean = pts.mean(axis=0)
    centered = pts - mean
    theta = 0.0
    if len(pts) > 1:
        _, sing, vt = np.linalg.svd(centered, full_matrices=False)
        if sing[0] - sing[1] > DEGENERATE_RTOL * sing[0]:
            vx, vy = vt[0]
            theta = wrap_half_pi(math.atan2(vy, vx))
    c, s = math.cos(theta), math.sin(theta)
    p1 = centered @ [c, s]
    p2 = centered @ [-s, c]
    lo1, hi1 = p1.min(), p1.max()
    lo2, hi2 = p2.min(), p2.max()
    m1, m2 = (lo1 + hi1) / 2, (lo2 + hi2) / 2
    cx = mean[0] + m1 * c - m2 * s
    cy = mean[1] + m1 * s + m2 * c
    w = hi1 - lo1 + 1.0
    h = hi2 - lo2 + 1.0
    if h - w > SWAP_ATOL:
        w, h = h, w
        theta = wrap_half_pi(theta + math.pi / 2)
    return OrientedBox(float(cx), float(cy), float(w), float(h), float(theta))


def attach_geometry(
    instances: list[BuildingInstance], geom: ZoneGeometry
) -> list[BuildingInstance]:
    """Return instances with majority zone and oriented box filled in."""
    zmap = geom.zone_map()
    out = []
    for inst in instances:
        zones = zmap[inst.pixels[:, 1], inst.pixels[:, 0]]
        zone = pick_majority(np.bincount(zones, minlength=len(Zone)))
        out.append(replace(inst, zone=zone, obb=fit_obb(inst.pixels)))
    return out


def _fmt(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def to_yolo_obb(instance: BuildingInstance, height: int, width: int) -> str:
    """``class cx/W cy/H w/W h/H theta`` with six decimals."""
    box = instance.obb
    if box is None:
        raise ValueError(f"instance {instance.id} has no oriented box")
    fields = [box.cx / width, box.cy / height, box.w / width, box.h / height, box.theta]
    return " ".join([str(int(instance.category))] + [_fmt(f) for f in fields])


def yolo_obb_text(instances: list[BuildingInstance], height: int, width: int) -> str:
    return "".join(to_yolo_obb(inst, height, width) + "\n" for inst in sorted(instances, key=lambda i: i.id))
