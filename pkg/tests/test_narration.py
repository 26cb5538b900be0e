import json

import httpx
import numpy as np
import pytest

from maskscribe.grading import assess
from maskscribe.http_client import BackendError
from maskscribe.instances import attach_geometry, extract_instances
from maskscribe.mask_core import DamageCategory, SegmentationMask, category_histogram
from maskscribe.narration import (
    AnnotationError,
    ChatCompletionBackend,
    GroundingError,
    TemplateBackend,
    backend_from_env,
    build_prompt,
    compile_annotation,
    compile_counting,
    describe_zones,
    extract_integers,
    generate_description,
)
from maskscribe.partition import Zone, ZoneGeometry
from maskscribe.pipeline import annotate_mask
from maskscribe.zonal_stats import SceneStats, ZoneStats, compute_zone_stats

I, D, X = DamageCategory.INTACT, DamageCategory.DAMAGED, DamageCategory.DESTROYED


def zstats(zone, inst=None, pix=None):
    inst = inst or {}
    pix = pix or {}
    return ZoneStats(
        zone,
        {c: pix.get(c, 0) for c in DamageCategory},
        {c: inst.get(c, 0) for c in (I, D, X)},
    )


def test_prompt_starts_with_stats():
    p = build_prompt(zstats(Zone.TOP, {I: 2}, {I: 40}), "Describe the zone.")
    lines = p.text.splitlines()
    assert lines[0].startswith("Statistics (top zone)")
    assert lines[1] == "intact: 2 buildings (40 px)"
    assert p.text.rstrip().endswith("Describe the zone.")
    assert p.text.index("intact") < p.text.index("Describe")


def test_prompt_zero_stats():
    p = build_prompt(zstats(Zone.LEFT))
    assert "intact: 0 buildings (0 px)" in p.text
    assert "damaged: 0 buildings (0 px)" in p.text
    assert "destroyed: 0 buildings (0 px)" in p.text


def test_prompt_global_category_order():
    p = build_prompt(zstats(None, {I: 3, D: 2, X: 1}, {I: 30, D: 20, X: 10}))
    body = p.stats_payload.splitlines()[1:]
    assert [line.split(":")[0] for line in body] == ["intact", "damaged", "destroyed"]
    assert p.zone == "global"


def test_prompt_requires_instruction():
    with pytest.raises(ValueError):
        build_prompt(zstats(Zone.TOP), "   ")


def test_template_zero_bucket():
    text = generate_description(build_prompt(zstats(Zone.TOP)), TemplateBackend())
    assert text == "The top zone contains no building structures."


def test_template_mixed_zone():
    text = generate_description(
        build_prompt(zstats(Zone.CENTRAL, {I: 3, X: 1}, {I: 90, X: 12})), TemplateBackend()
    )
    assert {3, 1} <= set(extract_integers(text))
    assert "intact" in text and "destroyed" in text


def test_template_spill_pixels_are_mentioned():
    text = generate_description(build_prompt(zstats(Zone.TOP, {}, {D: 4})), TemplateBackend())
    assert text.startswith("The top zone contains no building structures.")
    assert 4 in extract_integers(text)


def test_template_severity_follows_zone_grade():
    heavy = generate_description(build_prompt(zstats(Zone.LEFT, {X: 2}, {X: 50})), TemplateBackend())
    calm = generate_description(build_prompt(zstats(Zone.LEFT, {I: 2}, {I: 50})), TemplateBackend())
    assert "destroyed" in heavy.lower() and "no signs of damage" in calm


class FakeBackend:
    name = "fake"

    def __init__(self, text):
        self.text = text

    def generate(self, prompt):
        return self.text


def test_grounding_rejects_hallucinated_numbers():
    prompt = build_prompt(zstats(Zone.TOP, {I: 2}, {I: 40}))
    with pytest.raises(GroundingError, match="unsupported numbers \\[7\\]"):
        generate_description(prompt, FakeBackend("2 intact buildings over 40 px and 7 trees"))
    with pytest.raises(GroundingError, match="missing counts \\[40\\]"):
        generate_description(prompt, FakeBackend("2 intact buildings"))
    assert generate_description(prompt, FakeBackend("2 buildings, 40 px")) == "2 buildings, 40 px"


def test_thousands_separator_accepted():
    prompt = build_prompt(zstats(Zone.TOP, {I: 2}, {I: 1500}))
    generate_description(prompt, FakeBackend("2 buildings covering 1,500 pixels"))


def chat_client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_external_backend_request_and_validation():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": " 2 intact buildings span 40 px. "}}]})

    backend = ChatCompletionBackend("http://llm.test/v1/chat/completions", "m", "key", client=chat_client(handler))
    text = generate_description(build_prompt(zstats(Zone.TOP, {I: 2}, {I: 40})), backend)
    assert text == "2 intact buildings span 40 px."
    assert seen["temperature"] == 0
    assert [m["role"] for m in seen["messages"]] == ["system", "user"]
    assert seen["messages"][1]["content"].startswith("Statistics (top zone)")
    assert seen["auth"] == "Bearer key"


def test_external_backend_rejects_ungrounded_text():
    def handler(request):
        return httpx.Response(200, json={"choices": [{"message": {"content": "About 12 buildings."}}]})

    backend = ChatCompletionBackend("http://llm.test", "m", client=chat_client(handler))
    with pytest.raises(GroundingError):
        generate_description(build_prompt(zstats(Zone.TOP, {I: 2}, {I: 40})), backend)


def test_external_backend_retries_then_fails():
    calls, sleeps = [], []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("unreachable", request=request)

    backend = ChatCompletionBackend("http://llm.test", "m", client=chat_client(handler), sleep=sleeps.append)
    with pytest.raises(BackendError) as info:
        backend.generate(build_prompt(zstats(Zone.TOP)))
    assert info.value.retryable
    assert len(calls) == 3 and sleeps == [1.0, 2.0]


def test_external_backend_recovers_after_503():
    responses = iter([httpx.Response(503), httpx.Response(200, json={"choices": [{"message": {"content": "no buildings"}}]})])
    backend = ChatCompletionBackend("http://llm.test", "m", client=chat_client(lambda r: next(responses)), sleep=lambda s: None)
    assert generate_description(build_prompt(zstats(Zone.TOP)), backend) == "no buildings"


def test_external_backend_unreachable_socket():
    backend = ChatCompletionBackend("http://127.0.0.1:9/v1/chat/completions", "m", backoff=0.0, timeout=2.0)
    with pytest.raises(BackendError) as info:
        backend.generate(build_prompt(zstats(Zone.TOP)))
    assert info.value.retryable and info.value.attempts == 3


def test_backend_selection(monkeypatch):
    monkeypatch.delenv("MASKSCRIBE_LLM_URL", raising=False)
    assert backend_from_env("auto").name == "template"
    with pytest.raises(RuntimeError):
        backend_from_env("external")
    monkeypatch.setenv("MASKSCRIBE_LLM_URL", "http://llm.test")
    assert backend_from_env("auto").name == "external"


def test_describe_zones_concurrent_external_keeps_order():
    def handler(request):
        body = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": body["messages"][1]["content"].splitlines()[0]}}]})

    mask = SegmentationMask(np.zeros((20, 20), dtype=np.int64))
    geom = ZoneGeometry(20, 20)
    scene = compute_zone_stats(mask, [], geom)
    backend = ChatCompletionBackend("http://llm.test", "m", client=chat_client(handler))
    out = describe_zones(scene, backend)
    assert list(out) == ["top", "central", "bottom", "left", "right"]
    assert out["left"] == "Statistics (left zone):"


def scene_from_totals(per_zone):
    zones = {z: zstats(z, per_zone.get(z, {})) for z in Zone}
    total = zstats(None, {c: sum(per_zone.get(z, {}).get(c, 0) for z in Zone) for c in (I, D, X)})
    return SceneStats(zones, total)


def test_counting_totals():
    text = compile_counting(scene_from_totals({Zone.TOP: {I: 3, X: 2}, Zone.RIGHT: {I: 2}}))
    assert "5 intact buildings" in text
    assert "2 destroyed buildings" in text
    assert "No damaged buildings" in text
    assert "3 in the top zone" in text and "2 in the right zone" in text


def test_counting_empty_scene():
    assert compile_counting(scene_from_totals({})) == "No building structures detected."


def test_counting_single_left():
    text = compile_counting(scene_from_totals({Zone.LEFT: {I: 1}}))
    assert "1 intact building" in text and "1 in the left zone" in text


def _doc(labels):
    return annotate_mask(SegmentationMask(labels), "img").document


def test_document_single_top_blob():
    labels = np.zeros((100, 100), dtype=np.int64)
    labels[5:8, 40:45] = 1
    doc = _doc(labels)
    assert list(doc) == ["schema_version", "metadata", "quantitative", "semantic"]
    assert list(doc["quantitative"]) == ["component_table", "pixel_table", "obb_records"]
    assert list(doc["semantic"])[:4] == ["zone_descriptions", "counting_text", "summary_text", "evaluation"]
    assert doc["quantitative"]["component_table"]["top"]["intact"] == 1
    assert len(doc["quantitative"]["obb_records"]) == 1
    assert doc["semantic"]["evaluation"]["level"] == 0


def test_document_empty_mask():
    doc = _doc(np.zeros((30, 30), dtype=np.int64))
    assert doc["quantitative"]["obb_records"] == []
    assert all(v == 0 for row in doc["quantitative"]["component_table"].values() for v in row.values())
    assert doc["semantic"]["evaluation"]["level"] == 0
    assert doc["semantic"]["counting_text"] == "No building structures detected."


def test_document_destroyed_majority():
    labels = np.zeros((40, 40), dtype=np.int64)
    flat = labels.reshape(-1)
    flat[:250] = 1
    flat[250:350] = 2
    flat[350:1000] = 3
    doc = _doc(labels)
    assert doc["semantic"]["evaluation"]["rho_dest"] == 0.65
    assert doc["semantic"]["evaluation"]["level"] == 4


def test_document_rejects_inconsistent_inputs():
    labels = np.zeros((20, 20), dtype=np.int64)
    labels[8:10, 8:10] = 1
    mask = SegmentationMask(labels)
    geom = ZoneGeometry(20, 20)
    inst = attach_geometry(extract_instances(mask), geom)
    scene = compute_zone_stats(mask, inst, geom)
    wrong = assess({I: 5, D: 0, X: 0})
    texts = {"zone_descriptions": {z.label: "" for z in Zone}, "counting_text": "", "summary_text": ""}
    with pytest.raises(AnnotationError, match="assessment"):
        compile_annotation(mask, inst, scene, wrong, texts, image_id="x", connectivity=8)
    right = assess(category_histogram(mask))
    with pytest.raises(AnnotationError, match="instance count"):
        compile_annotation(mask, [], scene, right, texts, image_id="x", connectivity=8)


def test_document_serialization_is_deterministic():
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 4, size=(32, 32)) * (rng.random((32, 32)) < 0.3)
    a = annotate_mask(SegmentationMask(labels), "a").document_json
    b = annotate_mask(SegmentationMask(labels), "a").document_json
    assert a == b
