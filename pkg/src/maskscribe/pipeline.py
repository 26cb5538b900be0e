"""End-to-end annotation of one mask."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .grading import DamageAssessment, assess
from .instances import BuildingInstance, attach_geometry, extract_instances, yolo_obb_text
from .mask_core import SegmentationMask
from .narration import (
    DEFAULT_INSTRUCTION,
    TemplateBackend,
    TextBackend,
    compile_annotation,
    compile_counting,
    compile_summary,
    describe_zones,
    dump_document,
)
from .partition import ZoneGeometry
from .zonal_stats import SceneStats, compute_zone_stats


@dataclass
class AnnotationResult:
    image_id: str
    instances: list[BuildingInstance]
    scene: SceneStats
    assessment: DamageAssessment
    document: dict

    @property
    def document_json(self) -> str:
        return dump_document(self.document)

    @property
    def obb_text(self) -> str:
        meta = self.document["metadata"]
        return yolo_obb_text(self.instances, meta["height"], meta["width"])

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        doc_path = out_dir / f"{self.image_id}.annotation.json"
        obb_path = out_dir / f"{self.image_id}.obb.txt"
        doc_path.write_bytes(self.document_json.encode("utf-8"))
        obb_path.write_bytes(self.obb_text.encode("utf-8"))
        return doc_path, obb_path


def annotate_mask(
    mask: SegmentationMask,
    image_id: str,
    *,
    connectivity: int = 8,
    backend: TextBackend | None = None,
    strict_minor: bool = False,
    instruction: str = DEFAULT_INSTRUCTION,
) -> AnnotationResult:
    backend = backend or TemplateBackend(strict_minor=strict_minor)
    geom = ZoneGeometry(mask.height, mask.width)
    instances = attach_geometry(extract_instances(mask, connectivity), geom)
    scene = compute_zone_stats(mask, instances, geom)
    assessment = assess(scene.total.pixel_counts, strict_minor=strict_minor)
    zone_assessments = {
        z.label: assess(s.pixel_counts, strict_minor=strict_minor) for z, s in scene.zones.items()
    }
    texts = {
        "zone_descriptions": describe_zones(scene, backend, instruction),
        "counting_text": compile_counting(scene),
        "summary_text": compile_summary(scene, assessment),
    }
    doc = compile_annotation(
        mask,
        instances,
        scene,
        assessment,
        texts,
        image_id=image_id,
        connectivity=connectivity,
        backend=backend.name,
        zone_assessments=zone_assessments,
    )
    return AnnotationResult(image_id, instances, scene, assessment, doc)
