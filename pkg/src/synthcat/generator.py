"""Synthetic listing generation pipeline.

One task rewrites one (product, attribute) pair under a sampled strategy:
make the attribute consistently read a new value, plant a single conflicting
mention, or scrub the attribute entirely.  The pipeline plans values
sequentially (the diversity registry is order-sensitive), then runs the
expensive generation calls in parallel, so batch output is reproducible for
a fixed seed regardless of worker interleaving.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from difflib import SequenceMatcher
from pathlib import Path
from random import Random
from typing import Mapping, Sequence

from synthcat.catalog import CANONICAL_FIELDS, AttributeRecord, Product, SamplingError
from synthcat.gateway import ChatRequest, LLMGateway, TokenUsage
from synthcat.prompts import (
    PromptTemplates,
    StoreConstraints,
    construct_prompt,
    validate_output_document,
)
from synthcat.strategies import StrategyLabel, StrategyProbabilities, sample_strategy
from synthcat.values import UsageCollector, ValueGenerationError, ValueProvider

PARSE_REMINDER = "Reminder: respond with exactly one JSON object that follows the format section."


class ParseError(Exception):
    """No valid output document could be extracted from the response."""


class GenerationFailure(Exception):
    """A task could not produce a synthetic product."""

    def __init__(self, stage: str, reason: str):
        super().__init__(f"{stage}: {reason}")
        self.stage = stage
        self.reason = reason


@dataclass(frozen=True)
class GenerationTask:
    """Planned work for one synthetic listing."""

    product: Product
    attribute: AttributeRecord
    strategy: StrategyLabel
    original_value: str
    new_value: str
    negative_value: str | None
    seed: int
    value_locked: bool = False  # single-option enumerated attribute; v may equal the original

    def __post_init__(self):
        if not self.new_value:
            raise ValueError("new_value must be non-empty")
        if self.strategy is StrategyLabel.INCORRECT:
            if not self.negative_value:
                raise ValueError("the inconsistency strategy requires a negative value")
            if self.negative_value.lower() == self.new_value.lower():
                raise ValueError("negative value must differ from the kept value")
        if (
            self.strategy is StrategyLabel.CORRECT
            and not self.value_locked
            and self.new_value.lower() == self.original_value.lower()
        ):
            raise ValueError("rewrite target must differ from the original value")


@dataclass(frozen=True)
class DiffSpan:
    """One changed region; offsets index the base text for removals and the
    synthetic text for additions and conflict marks."""

    field: str
    kind: str  # removed | added | incorrect_attribute
    begin: int
    end: int
    text: str

    def __post_init__(self):
        if self.kind not in ("removed", "added", "incorrect_attribute"):
            raise ValueError(f"unknown span kind {self.kind!r}")
        if not 0 <= self.begin < self.end:
            raise ValueError("span offsets must satisfy 0 <= begin < end")


@dataclass(frozen=True)
class ValidationReport:
    schema_ok: bool
    brand_ok: bool
    additional_changes: str
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class SyntheticProduct:
    id: str
    base_id: str
    strategy: StrategyLabel
    category: str
    attribute_key: str
    original_value: str
    new_value: str
    negative_value: str | None
    text_fields: Mapping[str, str]
    base_text_fields: Mapping[str, str]
    structured_value: Mapping[str, object]
    diff: tuple[DiffSpan, ...]
    brand_replacements: tuple[tuple[str, str], ...]
    validation: ValidationReport
    usage: TokenUsage
    seed: int

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "base_id": self.base_id,
            "strategy": self.strategy.value,
            "category": self.category,
            "attribute_key": self.attribute_key,
            "original_value": self.original_value,
            "new_value": self.new_value,
            "negative_value": self.negative_value,
            "text_fields": dict(self.text_fields),
            "base_text_fields": dict(self.base_text_fields),
            "structured_value": dict(self.structured_value),
            "diff": [
                {"field": s.field, "kind": s.kind, "begin": s.begin, "end": s.end, "text": s.text}
                for s in self.diff
            ],
            "brand_replacements": [
                {"original": orig, "replacement": repl} for orig, repl in self.brand_replacements
            ],
            "validation": {
                "schema_ok": self.validation.schema_ok,
                "brand_ok": self.validation.brand_ok,
                "additional_changes": self.validation.additional_changes,
                "notes": list(self.validation.notes),
            },
            "usage": {
                "input_tokens": self.usage.input_tokens,
                "output_tokens": self.usage.output_tokens,
            },
            "seed": self.seed,
        }


@dataclass
class GeneratorConfig:
    temperature: float = 0.3
    max_output_tokens: int = 1024
    parse_retries: int = 2
    acceptable_change_ratio: float = 0.10


@dataclass
class GenerationContext:
    """Everything generate_product needs besides the task itself."""

    gateway: LLMGateway
    value_provider: ValueProvider
    templates: PromptTemplates
    constraints: StoreConstraints = field(default_factory=StoreConstraints)
    config: GeneratorConfig = field(default_factory=GeneratorConfig)
    category_attributes: Mapping[str, Sequence[str]] = field(default_factory=dict)
    brand_lexicon: tuple[str, ...] = ()
    max_parallel: int = 4


def select_attribute(
    product: Product,
    category_attributes: Mapping[str, Sequence[str]],
    rng: Random,
) -> AttributeRecord:
    """Uniform pick among the product's attributes, honoring the per-category
    allowlist when one is configured for the product's category."""
    eligible = list(product.attributes)
    allow = category_attributes.get(product.category)
    if allow:
        allowed = {a.lower() for a in allow}
        eligible = [a for a in eligible if a.key.lower() in allowed]
    if not eligible:
        raise SamplingError(f"product {product.id!r} has no eligible attribute")
    return eligible[rng.randrange(len(eligible))]


def build_brand_lexicon(product: Product, configured: Sequence[str] = ()) -> tuple[str, ...]:
    """Brands to anonymize: the product's brand field plus configured names."""
    out: list[str] = []
    brand_text = product.text_fields.get("brand", "").strip()
    for name in ([brand_text] if brand_text else []) + list(configured):
        name = name.strip()
        if name and name.lower() not in (b.lower() for b in out):
            out.append(name)
    return tuple(out)


def plan_task(
    product: Product,
    attribute: AttributeRecord,
    pi: StrategyProbabilities,
    rng: Random,
    provider: ValueProvider,
    seed: int,
    usage: UsageCollector | None = None,
) -> GenerationTask:
    """Sample a strategy and settle the values before any generation call."""
    label = sample_strategy(pi, rng)
    original = attribute.value
    meta = provider.metadata_for(attribute.key)
    single_option = (
        meta is not None
        and meta.data_type == "enumerated"
        and len(meta.allowed_values) == 1
    )
    negative = None
    if label is StrategyLabel.INCORRECT:
        new_value = original
        negative = provider.generate_negative_value(
            product.category, attribute.key, original, usage=usage
        )
    elif single_option:
        new_value = meta.allowed_values[0]
    else:
        new_value = provider.generate_value(
            product.category, attribute.key, exclude=[original], usage=usage
        )
    return GenerationTask(
        product=product,
        attribute=attribute,
        strategy=label,
        original_value=original,
        new_value=new_value,
        negative_value=negative,
        seed=seed,
        value_locked=single_option,
    )


def parse_output(raw: str) -> dict:
    """Extract and validate the first JSON document in a response.

    Providers occasionally wrap the object in prose; scan for the first
    decodable object and hold it to the output contract.
    """
    decoder = json.JSONDecoder()
    idx = raw.find("{")
    while idx != -1:
        try:
            doc, _ = decoder.raw_decode(raw[idx:])
        except json.JSONDecodeError:
            idx = raw.find("{", idx + 1)
            continue
        if not isinstance(doc, dict):
            idx = raw.find("{", idx + 1)
            continue
        errors = validate_output_document(doc)
        if errors:
            raise ParseError("; ".join(errors))
        return doc
    raise ParseError("no JSON object found in response")


_TOKEN_RE = re.compile(r"\S+")


def _tokenize(text: str):
    matches = list(_TOKEN_RE.finditer(text))
    return [m.group() for m in matches], matches


def compute_diff(
    base_fields: Mapping[str, str],
    synth_fields: Mapping[str, str],
    negative_value: str | None = None,
) -> tuple[DiffSpan, ...]:
    """Token-level longest-common-subsequence diff per field.

    Removals carry offsets into the base text, additions into the synthetic
    text.  Added spans that contain the planted conflicting value are
    relabeled incorrect_attribute so downstream consumers can render them
    distinctly.
    """
    spans: list[DiffSpan] = []
    names = [f for f in CANONICAL_FIELDS if f in base_fields or f in synth_fields]
    for extra in sorted(set(base_fields) | set(synth_fields)):
        if extra not in names:
            names.append(extra)
    for name in names:
        base = base_fields.get(name, "")
        synth = synth_fields.get(name, "")
        a_tokens, a_matches = _tokenize(base)
        b_tokens, b_matches = _tokenize(synth)
        matcher = SequenceMatcher(a=a_tokens, b=b_tokens, autojunk=False)
        for op, i1, i2, j1, j2 in matcher.get_opcodes():
            if op in ("delete", "replace") and i2 > i1:
                begin = a_matches[i1].start()
                end = a_matches[i2 - 1].end()
                spans.append(DiffSpan(name, "removed", begin, end, base[begin:end]))
            if op in ("insert", "replace") and j2 > j1:
                begin = b_matches[j1].start()
                end = b_matches[j2 - 1].end()
                text = synth[begin:end]
                kind = "added"
                if negative_value and negative_value.lower() in text.lower():
                    kind = "incorrect_attribute"
                spans.append(DiffSpan(name, kind, begin, end, text))
    return tuple(spans)


def check_brand_anonymization(
    synth_fields: Mapping[str, str],
    brand_lexicon: Sequence[str],
) -> tuple[bool, tuple[str, ...]]:
    """Verify no lexicon brand survives in the synthetic text fields."""
    offending = []
    for brand in brand_lexicon:
        pattern = re.compile(rf"(?<!\w){re.escape(brand)}(?!\w)", re.IGNORECASE)
        for name, text in synth_fields.items():
            if pattern.search(text):
                offending.append(f"{name}:{brand}")
    return (not offending), tuple(offending)


def classify_additional_changes(
    diff: Sequence[DiffSpan],
    base_fields: Mapping[str, str],
    protected_terms: Sequence[str],
    fill_fields: set[str] | None = None,
    acceptable_ratio: float = 0.10,
) -> str:
    """Grade how much changed beyond the requested edit: none, acceptable, major.

    Spans that mention a protected term (the involved values or brand names)
    are the requested edit itself and do not count.  Filling a field that was
    empty in the base cannot be "none" but is tolerated as "acceptable".
    """
    fill_fields = fill_fields or set()
    protected = [t.lower() for t in protected_terms if t]
    total = sum(len(_TOKEN_RE.findall(text)) for text in base_fields.values())
    extraneous = 0
    filled = False
    for span in diff:
        if span.field in fill_fields:
            if span.kind in ("added", "incorrect_attribute"):
                filled = True
            continue
        lowered = span.text.lower()
        if any(term in lowered for term in protected):
            continue
        extraneous += len(_TOKEN_RE.findall(span.text))
    ratio = extraneous / total if total else 0.0
    if ratio == 0.0:
        return "acceptable" if filled else "none"
    if ratio <= acceptable_ratio:
        return "acceptable"
    return "major"


def generate_product(
    task: GenerationTask,
    ctx: GenerationContext,
    usage: UsageCollector | None = None,
) -> SyntheticProduct:
    """Run one planned task through prompt, generation, parsing, validation."""
    usage = usage or UsageCollector()
    product = task.product
    lexicon = build_brand_lexicon(product, ctx.brand_lexicon)
    sections, rendered = construct_prompt(
        task.strategy,
        product,
        task.attribute,
        task.new_value,
        ctx.constraints,
        negative_value=task.negative_value,
        brand_lexicon=lexicon,
        templates=ctx.templates,
    )

    base_fields = {k: v for k, v in product.canonical_fields().items() if v.strip()}
    doc = None
    last_error = "no attempt made"
    prompt_text = rendered
    for attempt in range(ctx.config.parse_retries + 1):
        response = ctx.gateway.complete(
            ChatRequest(
                system_text="",
                user_text=prompt_text,
                temperature=ctx.config.temperature,
                max_output_tokens=ctx.config.max_output_tokens,
                request_tag="generation",
            )
        )
        usage.add(response.usage)
        try:
            candidate = parse_output(response.text)
        except ParseError as exc:
            last_error = str(exc)
            prompt_text = f"{rendered}\n\n{PARSE_REMINDER}"
            continue
        missing = [
            name
            for name, text in base_fields.items()
            if text.strip() and not str(candidate.get(name, "")).strip()
        ]
        if missing:
            last_error = f"response dropped populated field(s): {', '.join(missing)}"
            prompt_text = f"{rendered}\n\n{PARSE_REMINDER}"
            continue
        doc = candidate
        break
    if doc is None:
        raise GenerationFailure("parse", last_error)

    synth_fields = {
        name: str(doc[name]) for name in CANONICAL_FIELDS if str(doc[name]).strip()
    }
    notes: list[str] = []
    brand_ok, offending = check_brand_anonymization(synth_fields, lexicon)
    if not brand_ok:
        notes.append(f"brand names survived anonymization: {', '.join(offending)}")

    diff = compute_diff(base_fields, synth_fields, negative_value=task.negative_value)
    replacements = tuple(
        (item["original"], item["replacement"]) for item in doc["brand_replacements"]
    )
    protected = [task.original_value, task.new_value, task.negative_value or ""]
    for orig, repl in replacements:
        protected.extend([orig, repl])
    protected.extend(lexicon)
    fill_fields = {name for name in synth_fields if not base_fields.get(name, "").strip()}
    additional = classify_additional_changes(
        diff,
        base_fields,
        protected,
        fill_fields,
        acceptable_ratio=ctx.config.acceptable_change_ratio,
    )

    inferable = task.strategy is not StrategyLabel.UNKNOWN
    structured = {
        "key": task.attribute.key,
        "value": task.new_value,
        "inferable": inferable,
    }
    return SyntheticProduct(
        id=f"{product.id}:{task.strategy.value}:{task.seed}",
        base_id=product.id,
        strategy=task.strategy,
        category=product.category,
        attribute_key=task.attribute.key,
        original_value=task.original_value,
        new_value=task.new_value,
        negative_value=task.negative_value,
        text_fields=synth_fields,
        base_text_fields=base_fields,
        structured_value=structured,
        diff=diff,
        brand_replacements=replacements,
        validation=ValidationReport(
            schema_ok=True,
            brand_ok=brand_ok,
            additional_changes=additional,
            notes=tuple(notes),
        ),
        usage=usage.total,
        seed=task.seed,
    )


def _task_seed(run_seed: int, index: int) -> int:
    return (run_seed * 1_000_003 + index) & 0xFFFF_FFFF_FFFF


@dataclass
class BatchResult:
    products: list[SyntheticProduct]
    manifest: dict


def run_batch(
    pairs: Sequence[tuple[Product, AttributeRecord]],
    ctx: GenerationContext,
    pi: StrategyProbabilities,
    run_seed: int,
    out_dir: str | Path | None = None,
    config_snapshot: Mapping | None = None,
) -> BatchResult:
    """Generate a batch of synthetic listings.

    Planning (strategy sampling and value calls) runs sequentially in task
    order; generation runs on a bounded thread pool.  Output files and the
    manifest are byte-stable across runs with the same inputs and seed.
    """
    planned: list[GenerationTask | None] = []
    collectors: list[UsageCollector] = []
    failures: list[dict] = []
    for index, (product, attribute) in enumerate(pairs):
        rng = Random(_task_seed(run_seed, index))
        collector = UsageCollector()
        collectors.append(collector)
        try:
            planned.append(
                plan_task(product, attribute, pi, rng, ctx.value_provider, _task_seed(run_seed, index), usage=collector)
            )
        except (ValueGenerationError, ValueError) as exc:
            failures.append(
                {"index": index, "product_id": product.id, "stage": "values", "reason": str(exc)}
            )
            planned.append(None)

    results: list[SyntheticProduct | None] = [None] * len(planned)
    failure_lock = threading.Lock()

    def _finish(index: int):
        task = planned[index]
        if task is None:
            return
        try:
            results[index] = generate_product(task, ctx, usage=collectors[index])
        except GenerationFailure as exc:
            with failure_lock:
                failures.append(
                    {
                        "index": index,
                        "product_id": task.product.id,
                        "stage": exc.stage,
                        "reason": exc.reason,
                    }
                )
        except Exception as exc:  # provider/transport errors surface here
            with failure_lock:
                failures.append(
                    {
                        "index": index,
                        "product_id": task.product.id,
                        "stage": "transport",
                        "reason": str(exc),
                    }
                )

    workers = max(1, ctx.max_parallel)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(_finish, range(len(planned))))

    products = [r for r in results if r is not None]
    failures.sort(key=lambda f: f["index"])

    planned_counts = {label.value: 0 for label in StrategyLabel}
    for task in planned:
        if task is not None:
            planned_counts[task.strategy.value] += 1
    success_counts = {label.value: 0 for label in StrategyLabel}
    for item in products:
        success_counts[item.strategy.value] += 1

    snapshot = dict(config_snapshot or {})
    config_hash = hashlib.sha256(
        json.dumps(snapshot, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()
    manifest = {
        "run_seed": run_seed,
        "config_hash": config_hash,
        "task_count": len(pairs),
        "success_count": len(products),
        "failure_count": len(failures),
        "failures": failures,
        "planned_strategy_counts": planned_counts,
        "strategy_counts": success_counts,
        "usage": ctx.gateway.ledger.snapshot(),
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "synthetic.jsonl").open("w", encoding="utf-8") as fh:
            for item in products:
                fh.write(json.dumps(item.to_record(), ensure_ascii=False) + "\n")
        with (out / "manifest.json").open("w", encoding="utf-8") as fh:
            json.dump(manifest, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
    return BatchResult(products=products, manifest=manifest)
