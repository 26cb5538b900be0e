"""Damage categories, palettes and segmentation-mask I/O."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

RAW_HEADER = struct.Struct("<II")


class MaskError(ValueError):
    """Raised when a mask file cannot be decoded into valid categories."""


class DamageCategory(enum.IntEnum):
    BACKGROUND = 0
    INTACT = 1
    DAMAGED = 2
    DESTROYED = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def is_building(self) -> bool:
        return self is not DamageCategory.BACKGROUND

    @classmethod
    def from_name(cls, name: str) -> "DamageCategory":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown damage category {name!r}") from None


BUILDING_CATEGORIES = (
    DamageCategory.INTACT,
    DamageCategory.DAMAGED,
    DamageCategory.DESTROYED,
)

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class Palette:
    """RGB color for each damage category (one color per category)."""

    colors: Mapping[DamageCategory, RGB]

    def __post_init__(self) -> None:
        if set(self.colors) != set(DamageCategory):
            missing = sorted(c.label for c in set(DamageCategory) - set(self.colors))
            raise ValueError(f"palette missing categories: {', '.join(missing)}")
        seen: dict[RGB, DamageCategory] = {}
        for cat, rgb in self.colors.items():
            if len(rgb) != 3 or any(not 0 <= ch <= 255 for ch in rgb):
                raise ValueError(f"invalid color {rgb!r} for {cat.label}")
            if tuple(rgb) in seen:
                raise ValueError(
                    f"color {tuple(rgb)} assigned to both {seen[tuple(rgb)].label} and {cat.label}"
                )
            seen[tuple(rgb)] = cat

    @classmethod
    def default(cls) -> "Palette":
        return cls(
            {
                DamageCategory.BACKGROUND: (0, 0, 0),
                DamageCategory.INTACT: (0, 255, 0),
                DamageCategory.DAMAGED: (0, 0, 255),
                DamageCategory.DESTROYED: (255, 0, 0),
            }
        )

    @classmethod
    def from_text(cls, text: str) -> "Palette":
        """Parse ``R,G,B=category_name`` lines; unlisted categories keep defaults."""
        colors = dict(cls.default().colors)
        overridden: set[DamageCategory] = set()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rgb_part, name = line.split("=", 1)
                rgb = tuple(int(x) for x in rgb_part.split(","))
            except ValueError:
                raise ValueError(f"palette line {lineno}: expected 'R,G,B=name', got {raw!r}") from None
            if len(rgb) != 3:
                raise ValueError(f"palette line {lineno}: expected three channels")
            cat = DamageCategory.from_name(name)
            if cat in overridden:
                raise ValueError(f"palette line {lineno}: {cat.label} listed twice")
            overridden.add(cat)
            colors[cat] = rgb  # type: ignore[assignment]
        return cls(colors)

    @classmethod
    def from_file(cls, path: str | Path) -> "Palette":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def as_array(self) -> np.ndarray:
        """(4, 3) array of colors indexed by category code."""
        return np.array([self.colors[c] for c in DamageCategory], dtype=np.int16)


@dataclass(frozen=True, eq=False)
class SegmentationMask:
    """H x W grid of category codes, indexed ``labels[v, u]`` (row, column)."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise MaskError(f"mask must be a non-empty 2-D grid, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() > 3):
            bad = np.argwhere((labels < 0) | (labels > 3))[0]
            v, u = int(bad[0]), int(bad[1])
            raise MaskError(f"value {labels[v, u]} outside category range at ({u},{v})")
        labels = labels.astype(np.uint8, copy=True)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SegmentationMask):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def __getitem__(self, uv: tuple[int, int]) -> DamageCategory:
        u, v = uv
        return DamageCategory(int(self.labels[v, u]))


def category_histogram(mask: SegmentationMask) -> dict[DamageCategory, int]:
    counts = np.bincount(mask.labels.ravel(), minlength=4)
    return {c: int(counts[c]) for c in DamageCategory}


def decode_indexed(values: np.ndarray) -> SegmentationMask:
    values = np.asarray(values)
    if values.ndim != 2:
        raise MaskError(f"indexed mask must be single-channel, got shape {values.shape}")
    return SegmentationMask(values.astype(np.int64))


def decode_palette(rgb: np.ndarray, palette: Palette | None = None, tolerance: int = 0) -> SegmentationMask:
    """Map RGB pixels to categories by color lookup.

    With ``tolerance > 0`` a pixel matches a color when every channel is within
    ``tolerance``; the closest color (max channel difference) wins, lower code on ties.
    """
    palette = palette or Palette.default()
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise MaskError(f"palette mask must be RGB, got shape {rgb.shape}")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    pixels = rgb[:, :, :3].astype(np.int16)
    colors = palette.as_array()
    # (H, W, 4): max abs channel difference to each palette color
    dist = np.abs(pixels[:, :, None, :] - colors[None, None, :, :]).max(axis=3)
    best = dist.argmin(axis=2)
    best_dist = np.take_along_axis(dist, best[:, :, None], axis=2)[:, :, 0]
    unmatched = best_dist > tolerance
    if unmatched.any():
        v, u = (int(i) for i in np.argwhere(unmatched)[0])
        color = tuple(int(c) for c in pixels[v, u])
        raise MaskError(f"color {color} has no palette mapping at ({u},{v})")
    return SegmentationMask(best)


def encode_palette(mask: SegmentationMask, palette: Palette | None = None) -> np.ndarray:
    palette = palette or Palette.default()
    return palette.as_array().astype(np.uint8)[mask.labels]


def _read_raw(path: Path) -> np.ndarray:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise MaskError(f"{path}: unreadable mask ({exc})") from exc
    if len(data) < RAW_HEADER.size:
        raise MaskError(f"{path}: truncated raw header")
    height, width = RAW_HEADER.unpack_from(data)
    body = data[RAW_HEADER.size :]
    if len(body) != height * width:
        raise MaskError(f"{path}: expected {height * width} bytes of labels, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def load_mask(
    path: str | Path,
    mode: str = "indexed",
    palette: Palette | None = None,
    tolerance: int = 0,
) -> SegmentationMask:
    """Read a mask from PNG (or any Pillow-readable raster) or the ``.raw`` format.

    ``mode`` is ``"indexed"`` (pixel values are category codes), ``"palette"``
    (RGB pixels looked up in ``palette``) or ``"auto"`` (palette for RGB
    images, indexed otherwise).
    """
    path = Path(path)
    if mode not in ("indexed", "palette", "auto"):
        raise ValueError(f"unknown mask mode {mode!r}")
    if path.suffix.lower() == ".raw":
        if mode == "palette":
            raise MaskError(f"{path}: raw masks are always indexed")
        return decode_indexed(_read_raw(path))
    try:
        with Image.open(path) as img:
            img.load()
            if mode == "auto":
                mode = "palette" if img.mode in ("RGB", "RGBA") else "indexed"
            if mode == "indexed":
                if img.mode == "P":
                    arr = np.array(img)  # palette indices, not colors
                elif img.mode in ("L", "I", "I;16", "1"):
                    arr = np.array(img)
                else:
                    raise MaskError(f"{path}: indexed mode needs a single-channel image, got {img.mode}")
            else:
                arr = np.array(img.convert("RGB"))
    except MaskError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise MaskError(f"{path}: unreadable mask ({exc})") from exc
    if mode == "indexed":
        return decode_indexed(arr.astype(np.int64))
    return decode_palette(arr, palette, tolerance)


def save_mask(mask: SegmentationMask, path: str | Path, mode: str = "indexed", palette: Palette | None = None) -> None:
    path = Path(path)
    if path.suffix.lower() == ".raw":
        if mode != "indexed":
            raise ValueError("raw masks are always indexed")
        path.write_bytes(RAW_HEADER.pack(mask.height, mask.width) + mask.labels.tobytes())
        return
    if mode == "indexed":
        Image.fromarray(np.ascontiguousarray(mask.labels), mode="L").save(path)
    elif mode == "palette":
        Image.fromarray(encode_palette(mask, palette), mode="RGB").save(path)
    else:
        raise ValueError(f"unknown mask mode {mode!r}")
