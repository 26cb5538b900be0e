"""Turn building-damage segmentation masks into grounded annotation documents."""

__version__ = "0.1.0"

from .grading import DamageAssessment, assess  # noqa: E402
from .instances import BuildingInstance, OrientedBox, extract_instances, fit_obb, to_yolo_obb  # noqa: E402
from .mask_core import DamageCategory, Palette, SegmentationMask, category_histogram, load_mask  # noqa: E402
from .partition import Zone, ZoneGeometry, assign_zone, zone_of_pixel  # noqa: E402
from .pipeline import annotate_mask  # noqa: E402
from .zonal_stats import ZoneStats, compute_zone_stats  # noqa: E402

__all__ = [
    "BuildingInstance",
    "DamageAssessment",
    "DamageCategory",
    "OrientedBox",
    "Palette",
    "SegmentationMask",
    "Zone",
    "ZoneGeometry",
    "ZoneStats",
    "annotate_mask",
    "assess",
    "assign_zone",
    "category_histogram",
    "compute_zone_stats",
    "extract_instances",
    "fit_obb",
    "load_mask",
    "to_yolo_obb",
    "zone_of_pixel",
]
