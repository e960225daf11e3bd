"""Product catalog ingestion, sampling, and descriptive statistics.

Input is a UTF-8 line-delimited stream of JSON records:

    {"id": "p1", "category": "Shoes",
     "paragraphs": [{"source": "title", "text": "..."}, ...],
     "attributes": [{"key": "Color", "value": "red",
                     "evidences": [{"pid": 0, "begin": 5, "end": 8}]}]}

``pid`` indexes the record's ``paragraphs`` list; ``begin``/``end`` are
character offsets into that paragraph (end exclusive).  Ingestion
consolidates paragraphs into named text fields (``title``, ``description``,
``features``, plus any other source label such as ``brand`` or ``price``),
joining multiple paragraphs of the same field with a single newline, and
remaps every evidence span into the consolidated field.  Records whose
spans do not line up are skipped, never realigned.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import IO, Iterable, Iterator, Union

import numpy as np

logger = logging.getLogger(__name__)

# Canonical field order; other source labels follow in first-seen order.
CANONICAL_FIELDS = ("title", "description", "features")

# Source labels folded into the "features" field.
_FEATURE_SOURCES = {"feature", "features"}


class IngestError(Exception):
    """Fatal ingestion failure (unreadable stream, not a per-record skip)."""


class SamplingError(Exception):
    """Raised when a sampling request cannot be satisfied."""


@dataclass(frozen=True)
class EvidenceSpan:
    """One supporting occurrence of an attribute value in a text field."""

    field: str
    begin: int
    end: int
    surface: str


@dataclass(frozen=True)
class AttributeRecord:
    """A structured key/value pair with its supporting text spans.

    ``evidences`` may be empty: the attribute is asserted but not grounded
    in the product text (a negative/absent attribute).
    """

    key: str
    value: str
    evidences: tuple[EvidenceSpan, ...] = ()


@dataclass(frozen=True)
class Product:
    """A catalog entry: structured attributes plus free-form text fields."""

    id: str
    category: str
    text_fields: dict[str, str]
    attributes: tuple[AttributeRecord, ...] = ()

    def non_empty_fields(self) -> dict[str, str]:
        return {k: v for k, v in self.text_fields.items() if v}

    def canonical_fields(self) -> dict[str, str]:
        """The title/description/features subset, in canonical order."""
        return {k: self.text_fields.get(k, "") for k in CANONICAL_FIELDS}

    def validate(self) -> list[str]:
        """Return a list of invariant violations (empty when valid)."""
        problems = []
        if not self.id:
            problems.append("empty id")
        if not self.category:
            problems.append("empty category")
        if not any(self.text_fields.values()):
            problems.append("no non-empty text field")
        for attr in self.attributes:
            if not attr.key:
                problems.append("attribute with empty key")
            for ev in attr.evidences:
                text = self.text_fields.get(ev.field)
                if text is None:
                    problems.append(f"evidence field {ev.field!r} missing")
                elif not (0 <= ev.begin <= ev.end <= len(text)):
                    problems.append(
                        f"evidence span {ev.begin}:{ev.end} outside field {ev.field!r}"
                    )
                elif text[ev.begin : ev.end] != ev.surface:
                    problems.append(
                        f"evidence surface mismatch in {ev.field!r} at {ev.begin}:{ev.end}"
                    )
        return problems


@dataclass
class Catalog:
    """An immutable-after-ingest collection of products."""

    products: list[Product] = field(default_factory=list)
    skipped: list[tuple[int, str]] = field(default_factory=list)  # (line_no, reason)

    def __len__(self) -> int:
        return len(self.products)

    def __iter__(self) -> Iterator[Product]:
        return iter(self.products)

    def by_id(self, product_id: str) -> Product:
        for p in self.products:
            if p.id == product_id:
                return p
        raise KeyError(product_id)

    def to_records(self) -> Iterator[dict]:
        """Serialize products back to the line-delimited record schema.

        Each consolidated field becomes one paragraph whose source label is
        the field name, so re-ingesting the output reproduces the catalog.
        """
        for p in self.products:
            fields = list(p.non_empty_fields().items())
            pid_by_field = {name: i for i, (name, _) in enumerate(fields)}
            yield {
                "id": p.id,
                "category": p.category,
                "paragraphs": [{"source": name, "text": text} for name, text in fields],
                "attributes": [
                    {
                        "key": a.key,
                        "value": a.value,
                        "evidences": [
                            {"pid": pid_by_field[ev.field], "begin": ev.begin, "end": ev.end}
                            for ev in a.evidences
                        ],
                    }
                    for a in p.attributes
                ],
            }

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.to_records():
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class CatalogStats:
    product_count: int
    category_histogram: dict[str, int]
    attribute_histogram: dict[str, int]
    attrs_per_product: tuple[float, float]  # (mean, population std)
    evidence_spans_per_attr: tuple[float, float]
    paragraphs_per_product: tuple[float, float]
    evidence_source_distribution: dict[str, float]


def _field_for_source(source: str) -> str:
    source = source.strip().lower()
    if source in _FEATURE_SOURCES:
        return "features"
    return source


def _consolidate(paragraphs: list[dict]) -> tuple[dict[str, str], list[tuple[str, int]]]:
    """Join paragraphs into fields; return (fields, per-paragraph placement).

    Placement maps each input paragraph index to (field name, char offset of
    the paragraph start within the consolidated field).  Paragraphs of the
    same field are joined with a single newline, preserving input order.
    """
    fields: dict[str, str] = {name: "" for name in CANONICAL_FIELDS}
    placement: list[tuple[str, int]] = []
    for para in paragraphs:
        name = _field_for_source(str(para.get("source", "")))
        text = str(para.get("text", ""))
        current = fields.get(name, "")
        if current:
            offset = len(current) + 1
            fields[name] = current + "\n" + text
        else:
            offset = 0
            fields[name] = text
        placement.append((name, offset))
    return fields, placement


def parse_record(raw: dict) -> Product:
    """Build a consolidated Product from one raw record.

    Raises ValueError naming the reason when the record breaks an invariant.
    """
    product_id = str(raw.get("id", "") or "")
    if not product_id:
        raise ValueError("missing id")
    category = str(raw.get("category", "") or "")
    if not category:
        raise ValueError("missing category")
    paragraphs = raw.get("paragraphs")
    if not isinstance(paragraphs, list) or not paragraphs:
        raise ValueError("missing paragraphs")

    fields, placement = _consolidate(paragraphs)

    attributes = []
    for attr in raw.get("attributes", []) or []:
        key = str(attr.get("key", "") or "")
        if not key:
            raise ValueError("attribute with empty key")
        value = str(attr.get("value", "") or "")
        evidences = []
        for ev in attr.get("evidences", []) or []:
            pid = ev.get("pid")
            if not isinstance(pid, int) or not (0 <= pid < len(paragraphs)):
                raise ValueError(f"evidence pid {pid!r} out of range")
            begin, end = ev.get("begin"), ev.get("end")
            para_text = str(paragraphs[pid].get("text", ""))
            if (
                not isinstance(begin, int)
                or not isinstance(end, int)
                or not (0 <= begin <= end <= len(para_text))
            ):
                raise ValueError(f"evidence span {begin!r}:{end!r} outside paragraph {pid}")
            field_name, para_offset = placement[pid]
            evidences.append(
                EvidenceSpan(
                    field=field_name,
                    begin=para_offset + begin,
                    end=para_offset + end,
                    surface=para_text[begin:end],
                )
            )
        attributes.append(AttributeRecord(key=key, value=value, evidences=tuple(evidences)))

    product = Product(
        id=product_id,
        category=category,
        text_fields=fields,
        attributes=tuple(attributes),
    )
    problems = product.validate()
    if problems:
        raise ValueError("; ".join(problems))
    return product


def convert_mave_record(raw: dict) -> dict:
    """Adapter stub for the upstream multi-source attribute dataset layout.

    The upstream format attaches a value to each evidence instead of the
    attribute; this maps it onto our record schema, emitting one attribute
    entry per distinct (key, value) with the matching evidence spans.
    """
    attributes = []
    for attr in raw.get("attributes", []) or []:
        key = attr.get("key", "")
        by_value: dict[str, list[dict]] = {}
        for ev in attr.get("evidences", []) or []:
            by_value.setdefault(str(ev.get("value", "")), []).append(
                {"pid": ev.get("pid"), "begin": ev.get("begin"), "end": ev.get("end")}
            )
        if not by_value:
            attributes.append({"key": key, "value": "", "evidences": []})
        for value, evs in by_value.items():
            attributes.append({"key": key, "value": value, "evidences": evs})
    return {
        "id": raw.get("id", ""),
        "category": raw.get("category", ""),
        "paragraphs": raw.get("paragraphs", []),
        "attributes": attributes,
    }


def ingest_catalog(
    source: Union[str, Path, IO[str], Iterable[str]],
    max_products: int | None = None,
) -> Catalog:
    """Ingest a line-delimited record stream into a consolidated Catalog.

    Malformed lines and records breaking invariants are skipped, counted,
    and logged with their line number; an unreadable source is fatal.
    """
    close_after = False
    if isinstance(source, (str, Path)):
        try:
            stream: Iterable[str] = open(source, "r", encoding="utf-8")
        except OSError as exc:
            raise IngestError(f"cannot read catalog source: {exc}") from exc
        close_after = True
    else:
        stream = source

    catalog = Catalog()
    seen_ids: set[str] = set()
    try:
        for line_no, line in enumerate(stream, start=1):
            if max_products is not None and len(catalog.products) >= max_products:
                break
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                catalog.skipped.append((line_no, f"invalid JSON: {exc.msg}"))
                logger.warning("line %d skipped: invalid JSON (%s)", line_no, exc.msg)
                continue
            try:
                product = parse_record(raw)
            except ValueError as exc:
                catalog.skipped.append((line_no, str(exc)))
                logger.warning("line %d skipped: %s", line_no, exc)
                continue
            if product.id in seen_ids:
                catalog.skipped.append((line_no, f"duplicate id {product.id!r}"))
                logger.warning("line %d skipped: duplicate id %r", line_no, product.id)
                continue
            seen_ids.add(product.id)
            catalog.products.append(product)
    finally:
        if close_after:
            stream.close()  # type: ignore[union-attr]
    return catalog


def top_categories(catalog: Catalog, k: int) -> list[str]:
    """The k most frequent categories; ties broken by name for determinism."""
    counts = Counter(p.category for p in catalog.products)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [name for name, _ in ranked[:k]]


def sample_generation_tasks(
    catalog: Catalog,
    top_k_categories: int,
    n_products: int,
    seed: int,
) -> list[tuple[Product, AttributeRecord]]:
    """Sample (product, attribute) pairs for generation.

    Restricts to the ``top_k_categories`` most frequent categories, samples
    up to ``n_products`` products uniformly without replacement, and picks
    one attribute per product uniformly at random.  Deterministic per seed.
    """
    if top_k_categories < 1:
        raise SamplingError("top_k_categories must be >= 1")
    if n_products < 1:
        raise SamplingError("n_products must be >= 1")
    if not catalog.products:
        raise SamplingError("catalog is empty")

    eligible_categories = set(top_categories(catalog, top_k_categories))
    eligible = [
        p
        for p in catalog.products
        if p.category in eligible_categories and p.attributes
    ]
    if not eligible:
        raise SamplingError(
            "no eligible products: need category in top "
            f"{top_k_categories} and at least one attribute"
        )

    rng = Random(seed)
    chosen = rng.sample(eligible, min(n_products, len(eligible)))
    return [(p, rng.choice(p.attributes)) for p in chosen]


def _paragraph_count(product: Product) -> int:
    total = 0
    for text in product.text_fields.values():
        total += sum(1 for segment in text.split("\n") if segment.strip())
    return total


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())  # population std


def compute_catalog_stats(catalog: Catalog) -> CatalogStats:
    """Descriptive statistics over a non-empty catalog."""
    if not catalog.products:
        raise ValueError("catalog is empty")
    category_histogram = Counter(p.category for p in catalog.products)
    attribute_histogram: Counter[str] = Counter()
    attrs_per_product = []
    spans_per_attr = []
    paragraphs = []
    for p in catalog.products:
        attrs_per_product.append(len(p.attributes))
        paragraphs.append(_paragraph_count(p))
        for attr in p.attributes:
            attribute_histogram[attr.key] += 1
            spans_per_attr.append(len(attr.evidences))
    return CatalogStats(
        product_count=len(catalog.products),
        category_histogram=dict(category_histogram),
        attribute_histogram=dict(attribute_histogram),
        attrs_per_product=_mean_std(attrs_per_product),
        evidence_spans_per_attr=_mean_std(spans_per_attr) if spans_per_attr else (0.0, 0.0),
        paragraphs_per_product=_mean_std(paragraphs),
        evidence_source_distribution=compute_evidence_distribution(catalog),
    )


def compute_evidence_distribution(catalog: Catalog) -> dict[str, float]:
    """Fraction of evidence spans per source field; empty when no evidence."""
    counts: Counter[str] = Counter()
    for p in catalog.products:
        for attr in p.attributes:
            for ev in attr.evidences:
                counts[ev.field] += 1
    total = sum(counts.values())
    if total == 0:
        return {}
    return {name: count / total for name, count in sorted(counts.items())}
