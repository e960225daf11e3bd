"""Generation pipeline: planning, parsing, diffing, validation, batching."""

import json

import pytest

from synthcat.catalog import SamplingError, parse_record
from synthcat.fixtures import build_fixture_catalog
from synthcat.gateway import TokenUsage, TransportError
from synthcat.generator import (
    PARSE_REMINDER,
    DiffSpan,
    GenerationFailure,
    GenerationTask,
    ParseError,
    build_brand_lexicon,
    check_brand_anonymization,
    classify_additional_changes,
    compute_diff,
    generate_product,
    parse_output,
    plan_task,
    run_batch,
    select_attribute,
)
from synthcat.mock_provider import MockProvider
from synthcat.strategies import StrategyLabel, StrategyProbabilities

VALID_DOC = {
    "title": "t",
    "description": "d",
    "features": "f",
    "brand_replacements": [],
    "change_notes": "n",
}


def fixture_product(catalog, category, needed_keys):
    needed = {k.lower() for k in needed_keys}
    for product in catalog.products:
        if product.category != category:
            continue
        keys = {a.key.lower() for a in product.attributes}
        if needed <= keys:
            return product
    raise AssertionError(f"no fixture product in {category} with {needed_keys}")


def attr_of(product, key):
    return next(a for a in product.attributes if a.key.lower() == key.lower())


def make_task(product, key, strategy, new_value, negative=None, seed=11):
    attribute = attr_of(product, key)
    return GenerationTask(
        product=product,
        attribute=attribute,
        strategy=strategy,
        original_value=attribute.value,
        new_value=new_value,
        negative_value=negative,
        seed=seed,
    )


def other_color(original):
    colors = ("crimson", "cobalt", "emerald", "amber", "ivory", "onyx")
    return next(c for c in colors if c != original.lower())


# ---------------------------------------------------------------- tasks


def test_task_validation():
    catalog = build_fixture_catalog(40)
    product = fixture_product(catalog, "Shoes", ["Color"])
    original = attr_of(product, "Color").value
    with pytest.raises(ValueError, match="differ from the original"):
        make_task(product, "Color", StrategyLabel.CORRECT, original)
    with pytest.raises(ValueError, match="requires a negative"):
        make_task(product, "Color", StrategyLabel.INCORRECT, original)
    with pytest.raises(ValueError, match="differ from the kept"):
        make_task(product, "Color", StrategyLabel.INCORRECT, original, negative=original.upper())
    with pytest.raises(ValueError, match="non-empty"):
        make_task(product, "Color", StrategyLabel.CORRECT, "")
    # value_locked lifts the difference requirement for one-option attributes.
    attribute = attr_of(product, "Color")
    GenerationTask(
        product=product,
        attribute=attribute,
        strategy=StrategyLabel.CORRECT,
        original_value=original,
        new_value=original,
        negative_value=None,
        seed=1,
        value_locked=True,
    )


def test_diff_span_validation():
    with pytest.raises(ValueError):
        DiffSpan("title", "edited", 0, 1, "x")
    with pytest.raises(ValueError):
        DiffSpan("title", "added", 3, 3, "x")


# ---------------------------------------------------------------- parsing


def test_parse_output_plain_and_wrapped():
    raw = json.dumps(VALID_DOC)
    assert parse_output(raw) == VALID_DOC
    assert parse_output(f"Here is the updated listing:\n{raw}\nDone.") == VALID_DOC


def test_parse_output_skips_undecodable_braces():
    raw = "{not json} " + json.dumps(VALID_DOC)
    assert parse_output(raw) == VALID_DOC


def test_parse_output_contract_violations_name_keys():
    doc = dict(VALID_DOC)
    del doc["features"]
    with pytest.raises(ParseError, match="missing key: features"):
        parse_output(json.dumps(doc))
    doc = dict(VALID_DOC, extra=1)
    with pytest.raises(ParseError, match="unknown key: extra"):
        parse_output(json.dumps(doc))


def test_parse_output_no_object():
    with pytest.raises(ParseError, match="no JSON object found"):
        parse_output("plain refusal text")
    with pytest.raises(ParseError, match="no JSON object found"):
        parse_output("[1, 2, 3]")


# ---------------------------------------------------------------- diffing


def test_compute_diff_replacement_offsets():
    base = {"title": "Acme red sneaker"}
    synth = {"title": "Acme blue sneaker"}
    spans = compute_diff(base, synth)
    removed = next(s for s in spans if s.kind == "removed")
    added = next(s for s in spans if s.kind == "added")
    assert (removed.begin, removed.end, removed.text) == (5, 8, "red")
    assert (added.begin, added.end, added.text) == (5, 9, "blue")
    assert base["title"][removed.begin : removed.end] == removed.text
    assert synth["title"][added.begin : added.end] == added.text


def test_compute_diff_insert_and_delete_only():
    spans = compute_diff({"title": "a b"}, {"title": "a x b"})
    assert [(s.kind, s.text) for s in spans] == [("added", "x")]
    assert spans[0].begin == 2 and spans[0].end == 3

    spans = compute_diff({"title": "a x b"}, {"title": "a b"})
    assert [(s.kind, s.text) for s in spans] == [("removed", "x")]
    assert spans[0].begin == 2 and spans[0].end == 3


def test_compute_diff_marks_conflicting_value():
    base = {"description": "Breathable upper."}
    synth = {"description": "Breathable upper. Some buyers report it as onyx."}
    spans = compute_diff(base, synth, negative_value="onyx")
    kinds = {s.kind for s in spans}
    assert kinds == {"incorrect_attribute"}
    span = spans[0]
    assert "onyx" in span.text
    assert synth["description"][span.begin : span.end] == span.text


def test_compute_diff_field_order_is_canonical():
    base = {"title": "a", "description": "b", "features": "c"}
    synth = {"title": "x", "description": "y", "features": "z"}
    spans = compute_diff(base, synth)
    fields = [s.field for s in spans]
    assert fields == sorted(
        fields, key=lambda f: ("title", "description", "features").index(f)
    )


def test_compute_diff_identical_fields_empty():
    fields = {"title": "same text", "features": "alpha beta"}
    assert compute_diff(fields, dict(fields)) == ()


# ---------------------------------------------------------------- validation


def test_check_brand_anonymization():
    ok, offending = check_brand_anonymization({"title": "Northwind shoe"}, ["Acme"])
    assert ok and offending == ()
    ok, offending = check_brand_anonymization(
        {"title": "ACME shoe", "description": "by Acme"}, ["Acme"]
    )
    assert not ok
    assert offending == ("title:Acme", "description:Acme")
    # Word-bounded: a brand embedded in a longer word does not count.
    ok, _ = check_brand_anonymization({"title": "Acmeister shoe"}, ["Acme"])
    assert ok


def test_classify_additional_changes_thresholds():
    base = {"description": " ".join(f"w{i}" for i in range(20))}

    assert classify_additional_changes([], base, []) == "none"

    protected_span = DiffSpan("description", "added", 0, 4, "onyx trim")
    assert classify_additional_changes([protected_span], base, ["onyx"]) == "none"

    two_tokens = DiffSpan("description", "added", 0, 9, "brand new")
    assert classify_additional_changes([two_tokens], base, []) == "acceptable"

    three_tokens = DiffSpan("description", "added", 0, 15, "brand new thing")
    assert classify_additional_changes([three_tokens], base, []) == "major"


def test_classify_additional_changes_fill_field():
    base = {"title": "one two three four"}
    fill = DiffSpan("description", "added", 0, 10, "new filler")
    result = classify_additional_changes([fill], base, [], fill_fields={"description"})
    assert result == "acceptable"


# ---------------------------------------------------------------- selection


def test_select_attribute_allowlist_and_errors(small_catalog):
    import random

    product = fixture_product(small_catalog, "Shoes", ["Type", "Color"])
    rng = random.Random(0)
    allow = {"Shoes": ["Color"]}
    for _ in range(5):
        assert select_attribute(product, allow, rng).key == "Color"
    with pytest.raises(SamplingError):
        select_attribute(product, {"Shoes": ["Nonexistent"]}, rng)
    free = {select_attribute(product, {}, random.Random(i)).key for i in range(30)}
    assert len(free) > 1  # unconstrained choice actually varies


def test_build_brand_lexicon_dedup():
    record = {
        "id": "b1",
        "category": "Shoes",
        "paragraphs": [
            {"source": "title", "text": "Acme shoe"},
            {"source": "brand", "text": "Acme"},
        ],
        "attributes": [{"key": "Color", "value": "red", "evidences": []}],
    }
    product = parse_record(record)
    assert build_brand_lexicon(product, ["acme", "Zenith", " Zenith "]) == (
        "Acme",
        "Zenith",
    )


# ---------------------------------------------------------------- generation


def test_generate_correct_rewrites_value(make_ctx, small_catalog):
    ctx, _ = make_ctx()
    product = fixture_product(small_catalog, "Shoes", ["Color"])
    original = attr_of(product, "Color").value
    target = other_color(original)
    task = make_task(product, "Color", StrategyLabel.CORRECT, target)
    result = generate_product(task, ctx)

    joined = " ".join(result.text_fields.values()).lower()
    assert target in joined
    assert original.lower() not in joined
    assert result.id == f"{product.id}:correct:{task.seed}"
    assert result.structured_value == {
        "key": "Color",
        "value": target,
        "inferable": True,
    }
    assert result.validation.schema_ok
    assert result.validation.brand_ok
    assert result.usage.input_tokens > 0 and result.usage.output_tokens > 0
    # Real brands were swapped for fictional ones and recorded.
    brand = product.text_fields["brand"]
    assert brand.lower() not in joined
    assert any(orig == brand for orig, _ in result.brand_replacements)


def test_generate_unknown_scrubs_value(make_ctx, small_catalog):
    ctx, _ = make_ctx()
    product = fixture_product(small_catalog, "Shoes", ["Color"])
    original = attr_of(product, "Color").value
    task = make_task(product, "Color", StrategyLabel.UNKNOWN, other_color(original))
    result = generate_product(task, ctx)
    joined = " ".join(result.text_fields.values()).lower()
    assert original.lower() not in joined
    assert task.new_value.lower() not in joined
    assert result.structured_value["inferable"] is False


def test_generate_incorrect_plants_single_conflict(make_ctx, small_catalog):
    ctx, _ = make_ctx()
    product = fixture_product(small_catalog, "Shoes", ["Color"])
    original = attr_of(product, "Color").value
    negative = other_color(original)
    task = make_task(
        product, "Color", StrategyLabel.INCORRECT, original, negative=negative
    )
    result = generate_product(task, ctx)
    joined = " ".join(result.text_fields.values()).lower()
    assert original.lower() in joined
    conflict_spans = [s for s in result.diff if s.kind == "incorrect_attribute"]
    assert len(conflict_spans) == 1
    assert negative in conflict_spans[0].text.lower()
    assert joined.count(negative) == 1


def test_generate_fills_empty_description(make_ctx, small_catalog):
    empty_desc = [
        p
        for p in small_catalog.products
        if not p.text_fields.get("description", "").strip()
    ]
    assert empty_desc, "fixture catalog should include empty-description products"
    product = empty_desc[0]
    attribute = product.attributes[0]
    ctx, _ = make_ctx()
    task = plan_task(
        product,
        attribute,
        StrategyProbabilities(1.0, 0.0, 0.0),
        __import__("random").Random(3),
        ctx.value_provider,
        seed=3,
    )
    result = generate_product(task, ctx)
    assert result.text_fields.get("description", "").strip()
    assert "description" not in result.base_text_fields
    assert result.validation.additional_changes == "acceptable"


class _GenerationInterceptor:
    """Overrides generation responses for the first N calls, then delegates."""

    def __init__(self, inner, responses):
        self.inner = inner
        self.responses = list(responses)
        self.provider_id = f"intercept({inner.provider_id})"

    def complete(self, request):
        if request.request_tag == "generation" and self.responses:
            return self.responses.pop(0), TokenUsage(1, 1)
        return self.inner.complete(request)


def test_generate_retries_after_parse_error(make_ctx, small_catalog):
    product = fixture_product(small_catalog, "Shoes", ["Color"])
    original = attr_of(product, "Color").value
    provider = _GenerationInterceptor(MockProvider(), ["sorry, no JSON here"])
    ctx, recorder = make_ctx(record_requests=True, provider=provider)
    task = make_task(product, "Color", StrategyLabel.CORRECT, other_color(original))
    result = generate_product(task, ctx)
    assert result.validation.schema_ok
    generation_requests = [
        r for r in recorder.requests if r.request_tag == "generation"
    ]
    assert len(generation_requests) == 2
    assert not generation_requests[0].user_text.endswith(PARSE_REMINDER)
    assert generation_requests[1].user_text.endswith(PARSE_REMINDER)


def test_generate_retries_when_populated_field_dropped(make_ctx, small_catalog):
    product = fixture_product(small_catalog, "Shoes", ["Color"])
    assert product.text_fields["description"].strip()
    original = attr_of(product, "Color").value
    dropped = json.dumps(dict(VALID_DOC, description=""))
    provider = _GenerationInterceptor(MockProvider(), [dropped])
    ctx, recorder = make_ctx(record_requests=True, provider=provider)
    task = make_task(product, "Color", StrategyLabel.CORRECT, other_color(original))
    result = generate_product(task, ctx)
    assert result.text_fields["description"].strip()
    assert (
        len([r for r in recorder.requests if r.request_tag == "generation"]) == 2
    )


def test_generate_fails_after_exhausting_parse_retries(make_ctx, small_catalog):
    product = fixture_product(small_catalog, "Shoes", ["Color"])
    original = attr_of(product, "Color").value
    provider = _GenerationInterceptor(MockProvider(), ["x"] * 10)
    ctx, _ = make_ctx(provider=provider)
    task = make_task(product, "Color", StrategyLabel.CORRECT, other_color(original))
    with pytest.raises(GenerationFailure) as excinfo:
        generate_product(task, ctx)
    assert excinfo.value.stage == "parse"
    assert "no JSON object" in excinfo.value.reason


# ---------------------------------------------------------------- batching


def batch_pairs(catalog, n):
    pairs = []
    for product in catalog.products[:n]:
        pairs.append((product, product.attributes[0]))
    return pairs


def test_run_batch_deterministic_across_fresh_contexts(make_ctx, small_catalog):
    pairs = batch_pairs(small_catalog, 12)
    pi = StrategyProbabilities()
    ctx1, _ = make_ctx()
    ctx2, _ = make_ctx()
    r1 = run_batch(pairs, ctx1, pi, run_seed=42)
    r2 = run_batch(pairs, ctx2, pi, run_seed=42)
    assert [p.to_record() for p in r1.products] == [p.to_record() for p in r2.products]
    assert r1.manifest == r2.manifest
    r3 = run_batch(pairs, make_ctx()[0], pi, run_seed=43)
    assert r3.manifest != r1.manifest


def test_run_batch_writes_stable_outputs(make_ctx, small_catalog, tmp_path):
    pairs = batch_pairs(small_catalog, 8)
    pi = StrategyProbabilities()
    out = tmp_path / "run"
    result = run_batch(
        pairs, make_ctx()[0], pi, run_seed=7, out_dir=out, config_snapshot={"k": 1}
    )
    lines = (out / "synthetic.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == result.manifest["success_count"] == len(result.products)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest == result.manifest

    import hashlib

    expected_hash = hashlib.sha256(
        json.dumps({"k": 1}, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()
    assert manifest["config_hash"] == expected_hash
    assert manifest["task_count"] == 8
    assert manifest["failure_count"] == 0
    assert sum(manifest["strategy_counts"].values()) == 8
    assert manifest["usage"]["generation"]["calls"] >= 8


def test_run_batch_isolates_transport_failures(make_ctx, small_catalog):
    pairs = batch_pairs(small_catalog, 6)
    victim_title = pairs[2][0].text_fields["title"]

    def hook(request):
        if request.request_tag == "generation" and victim_title in request.user_text:
            return TransportError("injected outage", retryable=False)
        return None

    ctx, _ = make_ctx(provider=MockProvider(fail_hook=hook))
    result = run_batch(pairs, ctx, StrategyProbabilities(), run_seed=5)
    assert len(result.products) == 5
    assert result.manifest["failure_count"] == 1
    failure = result.manifest["failures"][0]
    assert failure["index"] == 2
    assert failure["stage"] == "transport"
    assert failure["product_id"] == pairs[2][0].id
    surviving_ids = {p.base_id for p in result.products}
    assert pairs[2][0].id not in surviving_ids


class _VetoValues:
    """Blanks out single-value requests so planning fails."""

    def __init__(self, inner):
        self.inner = inner
        self.provider_id = f"veto({inner.provider_id})"

    def complete(self, request):
        if request.request_tag == "value_provider":
            return "", TokenUsage(1, 0)
        return self.inner.complete(request)


def test_run_batch_records_value_stage_failures(make_ctx, small_catalog):
    pairs = batch_pairs(small_catalog, 4)
    ctx, _ = make_ctx(provider=_VetoValues(MockProvider()))
    result = run_batch(pairs, ctx, StrategyProbabilities(1.0, 0.0, 0.0), run_seed=9)
    assert result.products == []
    assert result.manifest["failure_count"] == 4
    assert {f["stage"] for f in result.manifest["failures"]} == {"values"}
    assert [f["index"] for f in result.manifest["failures"]] == [0, 1, 2, 3]
