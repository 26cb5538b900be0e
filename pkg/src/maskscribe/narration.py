"""Statistics-first zone descriptions and annotation document assembly."""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import httpx

from . import __version__
from .grading import DamageAssessment, assess
from .http_client import BackendError, post_json
from .mask_core import BUILDING_CATEGORIES, DamageCategory, SegmentationMask, category_histogram
from .partition import ZONE_ORDER, Zone
from .zonal_stats import SceneStats, ZoneStats

SCHEMA_VERSION = "1.0"
PROMPT_TEMPLATE_VERSION = "stats-first-v1"
DEFAULT_INSTRUCTION = (
    "Using only the statistics above, describe the buildings in this zone and "
    "their damage state. Mention every nonzero count exactly as given and do "
    "not introduce any other numbers."
)
SYSTEM_PERSONA = (
    "You are a disaster damage analyst writing concise, factual situation "
    "reports from building-damage statistics derived from remote sensing imagery."
)
MAX_IN_FLIGHT = 5

_INT_RE = re.compile(r"\d+")
_THOUSANDS_RE = re.compile(r"(?<=\d),(?=\d{3}\b)")

SEVERITY_PHRASES = {
    0: "the structures here show no signs of damage",
    1: "damage here is minor and scattered",
    2: "this zone shows moderate damage",
    3: "this zone shows widespread devastation",
    4: "this zone is almost entirely destroyed",
}

SUMMARY_PHRASES = {
    0: "no building damage is evident",
    1: "damage is limited to a few structures",
    2: "damage is moderate and affects a noticeable share of the buildings",
    3: "damage is severe and widespread across the scene",
    4: "the built-up area is largely destroyed",
}


class GroundingError(ValueError):
    """Generated text omits or contradicts a count from its statistics."""


@dataclass(frozen=True)
class GenerationPrompt:
    zone: str
    stats_payload: str
    instruction: str
    stats: ZoneStats | None = field(default=None, compare=False, repr=False)

    @property
    def text(self) -> str:
        return f"{self.stats_payload}\n\n{self.instruction}"

    def counts(self) -> list[int]:
        return [int(n) for n in _INT_RE.findall(self.stats_payload)]


def serialize_stats(stats: ZoneStats) -> str:
    where = "whole image" if stats.zone is None else f"{stats.name} zone"
    lines = [f"Statistics ({where}):"]
    for cat in BUILDING_CATEGORIES:
        lines.append(
            f"{cat.label}: {stats.instance_counts[cat]} buildings ({stats.pixel_counts[cat]} px)"
        )
    return "\n".join(lines)


def build_prompt(stats: ZoneStats, instruction: str = DEFAULT_INSTRUCTION) -> GenerationPrompt:
    if not instruction.strip():
        raise ValueError("instruction must be non-empty")
    return GenerationPrompt(stats.name, serialize_stats(stats), instruction.strip(), stats)


def extract_integers(text: str) -> list[int]:
    return [int(n) for n in _INT_RE.findall(_THOUSANDS_RE.sub("", text))]


def validate_grounding(text: str, allowed: set[int], required: set[int]) -> None:
    found = set(extract_integers(text))
    missing = sorted(required - found)
    extra = sorted(found - allowed)
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing counts {missing}")
        if extra:
            parts.append(f"unsupported numbers {extra}")
        raise GroundingError("; ".join(parts))


def _plural(n: int, word: str) -> str:
    return f"{n} {word}" if n == 1 else f"{n} {word}s"


def _join(items: list[str]) -> str:
    if len(items) <= 1:
        return "".join(items)
    return ", ".join(items[:-1]) + " and " + items[-1]


class TextBackend(Protocol):
    name: str

    def generate(self, prompt: GenerationPrompt) -> str: ...


class TemplateBackend:
    """Deterministic sentences built from the prompt's statistics."""

    name = "template"

    def __init__(self, strict_minor: bool = False):
        self.strict_minor = strict_minor

    def generate(self, prompt: GenerationPrompt) -> str:
        stats = prompt.stats
        if stats is None:
            raise ValueError("template backend needs the structured stats on the prompt")
        where = "the scene" if stats.zone is None else f"the {stats.name} zone"
        Where = where[0].upper() + where[1:]
        owned = [c for c in BUILDING_CATEGORIES if stats.instance_counts[c]]
        # pixels of buildings whose majority lies in another zone
        spill = [
            c for c in BUILDING_CATEGORIES if stats.pixel_counts[c] and not stats.instance_counts[c]
        ]
        if not owned:
            text = f"{Where} contains no building structures."
            if spill:
                parts = [f"{stats.pixel_counts[c]} {c.label}" for c in spill]
                text += f" Edges of buildings centred in neighbouring zones cover {_join(parts)} pixels."
            return text

        parts = [
            f"{_plural(stats.instance_counts[c], c.label + ' building')} covering "
            f"{_plural(stats.pixel_counts[c], 'pixel')}"
            for c in owned
        ]
        sentences = [f"{Where} contains {_join(parts)}."]
        if spill:
            extra = [f"{stats.pixel_counts[c]} {c.label}" for c in spill]
            sentences.append(f"Edges of buildings centred in neighbouring zones add {_join(extra)} pixels.")
        dominant = max(BUILDING_CATEGORIES, key=lambda c: (stats.pixel_counts[c], -c))
        sentences.append(f"{dominant.label.capitalize()} structures dominate the built-up area.")
        level = assess(stats.pixel_counts, strict_minor=self.strict_minor).level
        phrase = SEVERITY_PHRASES[level]
        sentences.append(phrase[0].upper() + phrase[1:] + ".")
        return " ".join(sentences)


class ChatCompletionBackend:
    """OpenAI-compatible chat-completion endpoint at temperature 0."""

    name = "external"

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str | None = None,
        attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] | None = None,
    ):
        self.url = url
        self.model = model
        self.api_key = api_key
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self.client = client
        self.sleep = sleep

    @classmethod
    def from_env(cls, env: dict[str, str] | None = None, **kwargs) -> "ChatCompletionBackend":
        env = os.environ if env is None else env
        url = env.get("MASKSCRIBE_LLM_URL")
        if not url:
            raise RuntimeError("MASKSCRIBE_LLM_URL is not set")
        return cls(
            url=url,
            model=env.get("MASKSCRIBE_LLM_MODEL", "gpt-4o-mini"),
            api_key=env.get("MASKSCRIBE_LLM_API_KEY"),
            **kwargs,
        )

    def request_body(self, prompt: GenerationPrompt) -> dict:
        return {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": SYSTEM_PERSONA},
                {"role": "user", "content": prompt.text},
            ],
        }

    def generate(self, prompt: GenerationPrompt) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        kwargs = {"client": self.client}
        if self.sleep is not None:
            kwargs["sleep"] = self.sleep
        body = post_json(
            self.url,
            self.request_body(prompt),
            headers=headers,
            attempts=self.attempts,
            backoff=self.backoff,
            timeout=self.timeout,
            **kwargs,
        )
        try:
            return body["choices"][0]["message"]["content"].strip()
        except (KeyError, IndexError, TypeError, AttributeError) as exc:
            raise BackendError(f"unexpected chat-completion response shape: {exc!r}") from exc


def backend_from_env(kind: str = "auto", strict_minor: bool = False) -> TextBackend:
    """``auto`` picks the external backend only when its endpoint is configured."""
    if kind == "auto":
        kind = "external" if os.environ.get("MASKSCRIBE_LLM_URL") else "template"
    if kind == "template":
        return TemplateBackend(strict_minor=strict_minor)
    if kind == "external":
        return ChatCompletionBackend.from_env()
    raise ValueError(f"unknown backend {kind!r}")


def generate_description(prompt: GenerationPrompt, backend: TextBackend) -> str:
    """Run the backend and reject text that is not grounded in the prompt counts."""
    text = backend.generate(prompt)
    counts = prompt.counts()
    validate_grounding(text, allowed=set(counts), required={n for n in counts if n})
    return text


def describe_zones(
    scene: SceneStats, backend: TextBackend, instruction: str = DEFAULT_INSTRUCTION
) -> dict[str, str]:
    prompts = [build_prompt(scene.zones[z], instruction) for z in ZONE_ORDER]
    if isinstance(backend, TemplateBackend):
        texts = [generate_description(p, backend) for p in prompts]
    else:
        with ThreadPoolExecutor(max_workers=MAX_IN_FLIGHT) as pool:
            texts = list(pool.map(lambda p: generate_description(p, backend), prompts))
    return {z.label: t for z, t in zip(ZONE_ORDER, texts)}


def compile_counting(scene: SceneStats) -> str:
    """One sentence per damage category with its per-zone breakdown."""
    total = scene.total
    if total.total_instances == 0:
        return "No building structures detected."
    sentences = []
    for cat in BUILDING_CATEGORIES:
        n = total.instance_counts[cat]
        if n == 0:
            sentences.append(f"No {cat.label} buildings were detected.")
            continue
        verb = "is" if n == 1 else "are"
        clauses = [
            f"{scene.zones[z].instance_counts[cat]} in the {z.label} zone"
            for z in ZONE_ORDER
            if scene.zones[z].instance_counts[cat]
        ]
        sentences.append(
            f"There {verb} {_plural(n, cat.label + ' building')} in total: {_join(clauses)}."
        )
    return " ".join(sentences)


def compile_summary(scene: SceneStats, assessment: DamageAssessment) -> str:
    total = scene.total
    if total.total_instances == 0:
        return "No buildings were found in the scene, so no damage assessment applies beyond No Damage."
    parts = []
    for cat in BUILDING_CATEGORIES:
        n = total.instance_counts[cat]
        parts.append(f"{n} {cat.label}" if n else f"no {cat.label}")
    sentences = [f"The scene contains {_join(parts)} buildings."]
    affected = [
        z for z in ZONE_ORDER
        if scene.zones[z].pixel_counts[DamageCategory.DAMAGED] + scene.zones[z].pixel_counts[DamageCategory.DESTROYED]
    ]
    if affected:
        worst = max(
            affected,
            key=lambda z: (
                scene.zones[z].pixel_counts[DamageCategory.DAMAGED]
                + scene.zones[z].pixel_counts[DamageCategory.DESTROYED],
                -ZONE_ORDER.index(z),
            ),
        )
        sentences.append(f"Damage is concentrated in the {worst.label} zone.")
    phrase = SUMMARY_PHRASES[assessment.level]
    sentences.append(f"Overall severity is rated {assessment.name}: {phrase}.")
    return " ".join(sentences)


def component_table(scene: SceneStats) -> dict[str, dict[str, int]]:
    table = {z.label: {c.label: scene.zones[z].instance_counts[c] for c in BUILDING_CATEGORIES} for z in ZONE_ORDER}
    table["total"] = {c.label: scene.total.instance_counts[c] for c in BUILDING_CATEGORIES}
    return table


def pixel_table(scene: SceneStats) -> dict[str, dict[str, int]]:
    table = {z.label: {c.label: scene.zones[z].pixel_counts[c] for c in DamageCategory} for z in ZONE_ORDER}
    table["total"] = {c.label: scene.total.pixel_counts[c] for c in DamageCategory}
    return table


class AnnotationError(ValueError):
    """Inputs to document compilation disagree with each other."""


def _check_consistency(mask, instances, scene, assessment) -> None:
    hist = category_histogram(mask)
    if any(hist[c] != scene.total.pixel_counts[c] for c in DamageCategory):
        raise AnnotationError("zone pixel counts do not match the mask histogram")
    for z in Zone:
        for c in BUILDING_CATEGORIES:
            n = sum(1 for b in instances if b.zone == z and b.category == c)
            if n != scene.zones[z].instance_counts[c]:
                raise AnnotationError(f"instance count for {z.label}/{c.label} disagrees with the instance list")
    expected = (
        hist[DamageCategory.INTACT] + hist[DamageCategory.DAMAGED] + hist[DamageCategory.DESTROYED],
        hist[DamageCategory.DAMAGED],
        hist[DamageCategory.DESTROYED],
    )
    if (assessment.n_total, assessment.n_damaged, assessment.n_destroyed) != expected:
        raise AnnotationError("assessment counts do not match the mask")
    if any(b.obb is None for b in instances):
        raise AnnotationError("every instance needs an oriented box")


def compile_annotation(
    mask: SegmentationMask,
    instances,
    scene: SceneStats,
    assessment: DamageAssessment,
    texts: dict,
    *,
    image_id: str,
    connectivity: int,
    backend: str = "template",
    zone_assessments: dict[str, DamageAssessment] | None = None,
) -> dict:
    """Assemble the annotation document; key order is part of the format."""
    from .instances import to_yolo_obb

    _check_consistency(mask, instances, scene, assessment)
    zone_desc = texts["zone_descriptions"]
    if set(zone_desc) != {z.label for z in Zone}:
        raise AnnotationError("zone_descriptions must cover exactly the five zones")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "metadata": {
            "image_id": image_id,
            "height": mask.height,
            "width": mask.width,
            "connectivity": connectivity,
            "strict_minor": assessment.strict_minor,
            "backend": backend,
            "prompt_template": PROMPT_TEMPLATE_VERSION,
            "tool_version": __version__,
        },
        "quantitative": {
            "component_table": component_table(scene),
            "pixel_table": pixel_table(scene),
            "obb_records": [to_yolo_obb(b, mask.height, mask.width) for b in sorted(instances, key=lambda b: b.id)],
        },
        "semantic": {
            "zone_descriptions": {z.label: zone_desc[z.label] for z in ZONE_ORDER},
            "counting_text": texts["counting_text"],
            "summary_text": texts["summary_text"],
            "evaluation": assessment.to_dict(),
        },
    }
    if zone_assessments is not None:
        doc["semantic"]["zone_evaluations"] = {
            z.label: zone_assessments[z.label].to_dict() for z in ZONE_ORDER
        }
    return doc


def dump_document(doc: dict) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
