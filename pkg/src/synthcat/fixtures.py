"""Deterministic demo catalog for offline runs, demos, and tests.

Products are synthesized from small disjoint vocabularies so that edits are
cleanly observable: every attribute value is a standalone word or phrase
that never collides with template wording, brand names, or other attribute
vocabularies.  The builder is a pure function of (index count, seed shift),
so any two calls agree byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

from synthcat.catalog import Catalog, parse_record
from synthcat.values import AttributeMetadata

BRANDS = ("Acme", "Zenith", "Orbit", "Vanguard", "Pinnacle")

COLORS = ("crimson", "cobalt", "emerald", "amber", "ivory", "onyx")
SHOE_MATERIALS = ("leather", "canvas", "wool", "denim", "suede", "linen")
HOME_MATERIALS = ("ceramic", "bamboo", "copper", "marble")
SHOE_TYPES = ("trail", "road", "court", "indoor")
SLEEVES = ("long sleeve", "short sleeve", "sleeveless", "three-quarter")
PATTERNS = ("striped", "floral", "plaid", "paisley")
GENRES = ("mystery", "fantasy", "biography", "thriller")
BOOK_FORMATS = ("paperback", "hardcover", "audiobook", "boxed set")
FINISHES = ("matte", "glossy", "brushed", "hammered")
FLAVORS = ("vanilla", "caramel", "hazelnut", "peppermint")
SUGAR_LEVELS = ("unsweetened", "lightly sweetened", "classic sweet")
SHAFT_HEIGHTS = ("10 inch", "11 inch", "12 inch", "13 inch")

# (category, noun, [(attribute key, vocabulary), ...])
_CATEGORY_SPECS = (
    ("Shoes", "sneaker", (("Type", SHOE_TYPES), ("Color", COLORS), ("Material", SHOE_MATERIALS), ("Shaft Height", SHAFT_HEIGHTS))),
    ("Shirts & Tops", "shirt", (("Sleeve Style", SLEEVES), ("Color", COLORS), ("Pattern", PATTERNS))),
    ("Books", "novel", (("Genre", GENRES), ("Format", BOOK_FORMATS))),
    ("Home & Kitchen", "cookware set", (("Material", HOME_MATERIALS), ("Finish", FINISHES), ("Color", COLORS))),
    ("Grocery", "snack mix", (("Flavor", FLAVORS), ("Sugar Content", SUGAR_LEVELS))),
)

_FEATURE_PHRASES = {
    "Type": "Built as a {v} model",
    "Color": "Finished in a {v} tone",
    "Material": "Crafted from {v} stock",
    "Shaft Height": "Raised on a {v} profile",
    "Sleeve Style": "Cut in a {v} silhouette",
    "Pattern": "Printed with a {v} motif",
    "Genre": "Shelved under {v} reading",
    "Format": "Issued as a {v} edition",
    "Finish": "Coated with a {v} surface",
    "Flavor": "Blended with {v} notes",
    "Sugar Content": "Offered in a {v} recipe",
}


def _feature_line(key: str, value: str) -> str:
    return _FEATURE_PHRASES.get(key, "Includes {v} detailing in every unit").format(v=value)


def build_fixture_records(n_products: int, seed: int = 0) -> list[dict]:
    """Raw ingest-schema records for ``n_products`` synthetic listings."""
    if n_products < 1:
        raise ValueError("n_products must be >= 1")
    records = []
    for i in range(n_products):
        shift = i + seed
        category, noun, attr_specs = _CATEGORY_SPECS[shift % len(_CATEGORY_SPECS)]
        brand = BRANDS[(2 * shift + 1) % len(BRANDS)]
        n_attrs = 1 + (shift % 4)
        chosen = [
            (key, vocab[(shift + k) % len(vocab)])
            for k, (key, vocab) in enumerate(attr_specs[: min(n_attrs, len(attr_specs))])
        ]
        first_value = chosen[0][1]

        paragraphs = [{"source": "title", "text": f"{brand} {first_value} {noun}"}]
        has_description = shift % 11 != 0
        if has_description:
            paragraphs.append(
                {
                    "source": "description",
                    "text": (
                        f"The {brand} {noun} range pairs {first_value} styling "
                        "with mindful assembly for daily comfort."
                    ),
                }
            )
        feature_pid = {}
        for key, value in chosen:
            feature_pid[key] = len(paragraphs)
            paragraphs.append({"source": "features", "text": _feature_line(key, value)})
        brand_pid = len(paragraphs)
        paragraphs.append({"source": "brand", "text": brand})
        paragraphs.append({"source": "price", "text": f"${19 + (7 * shift) % 80}.99"})

        attributes = []
        for k, (key, value) in enumerate(chosen):
            evidences = []
            if k == 0:
                title = paragraphs[0]["text"]
                begin = title.find(value)
                evidences.append({"pid": 0, "begin": begin, "end": begin + len(value)})
                if has_description:
                    desc = paragraphs[1]["text"]
                    begin = desc.find(value)
                    evidences.append({"pid": 1, "begin": begin, "end": begin + len(value)})
            feat = paragraphs[feature_pid[key]]["text"]
            begin = feat.find(value)
            evidences.append(
                {"pid": feature_pid[key], "begin": begin, "end": begin + len(value)}
            )
            attributes.append({"key": key, "value": value, "evidences": evidences})
        if shift % 7 == 0:
            attributes.append(
                {
                    "key": "Brand",
                    "value": brand,
                    "evidences": [{"pid": brand_pid, "begin": 0, "end": len(brand)}],
                }
            )

        records.append(
            {
                "id": f"fx-{shift:05d}",
                "category": category,
                "paragraphs": paragraphs,
                "attributes": attributes,
            }
        )
    return records


def build_fixture_catalog(n_products: int, seed: int = 0) -> Catalog:
    return Catalog(products=[parse_record(r) for r in build_fixture_records(n_products, seed)])


def write_fixture_file(path: str | Path, n_products: int, seed: int = 0) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for record in build_fixture_records(n_products, seed):
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return out


def build_fixture_metadata() -> dict[str, AttributeMetadata]:
    """Attribute typing registry matching the fixture vocabularies."""
    entries = [
        AttributeMetadata("Color", "enumerated", allowed_values=COLORS),
        AttributeMetadata(
            "Material", "enumerated", allowed_values=SHOE_MATERIALS + HOME_MATERIALS
        ),
        AttributeMetadata("Type", "enumerated", allowed_values=SHOE_TYPES),
        AttributeMetadata("Sleeve Style", "text"),
        AttributeMetadata("Pattern", "enumerated", allowed_values=PATTERNS),
        AttributeMetadata("Genre", "enumerated", allowed_values=GENRES),
        AttributeMetadata("Format", "enumerated", allowed_values=BOOK_FORMATS),
        AttributeMetadata("Finish", "enumerated", allowed_values=FINISHES),
        AttributeMetadata("Flavor", "enumerated", allowed_values=FLAVORS),
        AttributeMetadata("Sugar Content", "enumerated", allowed_values=SUGAR_LEVELS),
        AttributeMetadata("Shaft Height", "numeric", valid_units=("inch",)),
        AttributeMetadata("Brand", "text"),
    ]
    return {m.key.lower(): m for m in entries}
