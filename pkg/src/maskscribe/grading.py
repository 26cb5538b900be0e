"""Dual-threshold damage grading on building-pixel counts."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .mask_core import DamageCategory

LEVEL_NAMES = ("No Damage", "Minor", "Moderate", "Severe", "Destroyed")

# (level, destroyed-ratio cutoff, damaged-or-destroyed-ratio cutoff), checked top-down
THRESHOLDS = (
    (4, Fraction(6, 10), Fraction(85, 100)),
    (3, Fraction(3, 10), Fraction(6, 10)),
    (2, Fraction(1, 10), Fraction(35, 100)),
)


@dataclass(frozen=True)
class DamageAssessment:
    n_total: int
    n_damaged: int
    n_destroyed: int
    level: int
    strict_minor: bool = False

    @property
    def name(self) -> str:
        return LEVEL_NAMES[self.level]

    @property
    def rho_dest_exact(self) -> Fraction:
        return Fraction(self.n_destroyed, self.n_total) if self.n_total else Fraction(0)

    @property
    def rho_dam_exact(self) -> Fraction:
        return Fraction(self.n_damaged + self.n_destroyed, self.n_total) if self.n_total else Fraction(0)

    @property
    def rho_dest(self) -> float:
        return float(self.rho_dest_exact)

    @property
    def rho_dam(self) -> float:
        return float(self.rho_dam_exact)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "name": self.name,
            "rho_dest": self.rho_dest,
            "rho_dam": self.rho_dam,
            "n_total": self.n_total,
            "n_damaged": self.n_damaged,
            "n_destroyed": self.n_destroyed,
        }


def grade_level(n_intact: int, n_damaged: int, n_destroyed: int, strict_minor: bool = False) -> int:
    """Level 0-4 with inclusive thresholds and first-match precedence.

    The Minor branch fires only on damaged pixels (``n_damaged > 0``), so a
    scene with a small destroyed fraction and no damaged pixels is Level 0.
    ``strict_minor`` widens that branch to any damaged-or-destroyed pixel.
    """
    total = n_intact + n_damaged + n_destroyed
    if total == 0:
        return 0
    dest = Fraction(n_destroyed, total)
    dam = Fraction(n_damaged + n_destroyed, total)
    for level, dest_cut, dam_cut in THRESHOLDS:
        if dest >= dest_cut or dam >= dam_cut:
            return level
    minor = (n_damaged + n_destroyed) if strict_minor else n_damaged
    return 1 if minor > 0 else 0


def assess(pixel_counts: Mapping[DamageCategory, int], strict_minor: bool = False) -> DamageAssessment:
    """Grade a per-category pixel-count table (background entries are ignored)."""
    counts = {c: int(pixel_counts.get(c, 0)) for c in DamageCategory}
    negative = [c.label for c, n in counts.items() if n < 0]
    if negative:
        raise ValueError(f"negative pixel counts for: {', '.join(negative)}")
    intact = counts[DamageCategory.INTACT]
    damaged = counts[DamageCategory.DAMAGED]
    destroyed = counts[DamageCategory.DESTROYED]
    return DamageAssessment(
        n_total=intact + damaged + destroyed,
        n_damaged=damaged,
        n_destroyed=destroyed,
        level=grade_level(intact, damaged, destroyed, strict_minor),
        strict_minor=strict_minor,
    )
