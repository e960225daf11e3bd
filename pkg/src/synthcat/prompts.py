"""Generation-prompt composition.

A prompt is four sections concatenated in fixed order — role, instruction,
context, format — each rendered from a versioned text template on disk and
joined under a named header line, so the structure of every prompt stays
auditable.  Instruction wording varies by strategy; role, context, and
format are shared.  Templates use ``$placeholder`` interpolation and may
carry ``#:`` header comment lines that are stripped at load time.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from string import Template

from synthcat.catalog import CANONICAL_FIELDS, AttributeRecord, Product
from synthcat.strategies import StrategyLabel

DEFAULT_LOCALE = "en-US"
SECTION_ORDER = ("ROLE", "INSTRUCTION", "CONTEXT", "FORMAT")
FIELD_BLOCK_OPEN = "<<<"
FIELD_BLOCK_CLOSE = ">>>"

# Context line labels; the deterministic mock provider parses these.
LABEL_CATEGORY = "Category: "
LABEL_ATTRIBUTE = "Attribute: "
LABEL_CURRENT_VALUE = "Current value: "
LABEL_TARGET_VALUE = "Target value: "
LABEL_CONFLICT_VALUE = "Conflicting value to mention once: "
LABEL_BRANDS = "Known brand names: "

# First line of each instruction template; identifies the strategy.
STRATEGY_MARKERS = {
    StrategyLabel.CORRECT: "Task: consistent attribute rewrite.",
    StrategyLabel.INCORRECT: "Task: single deliberate inconsistency.",
    StrategyLabel.UNKNOWN: "Task: attribute removal.",
}

_TEMPLATE_FILES = (
    "role.txt",
    "instruction_correct.txt",
    "instruction_incorrect.txt",
    "instruction_unknown.txt",
    "context.txt",
    "format.txt",
)

OUTPUT_FIELD_KEYS = ("title", "description", "features")
OUTPUT_CONTRACT_KEYS = OUTPUT_FIELD_KEYS + ("brand_replacements", "change_notes")


class PromptError(Exception):
    """Prompt construction failed (missing template, missing inputs)."""


@dataclass(frozen=True)
class StoreConstraints:
    """Marketplace formatting rules injected into every prompt."""

    locale_id: str = DEFAULT_LOCALE
    unit_system: str = "imperial"
    currency_symbol: str = "$"
    language_tag: str = "en"

    def __post_init__(self):
        if self.unit_system not in ("metric", "imperial"):
            raise ValueError(f"unit_system must be metric or imperial, got {self.unit_system!r}")


@dataclass(frozen=True)
class PromptSections:
    role_text: str
    instruction_text: str
    context_text: str
    format_text: str

    def __post_init__(self):
        for name in ("role_text", "instruction_text", "context_text", "format_text"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")

    def render(self) -> str:
        parts = []
        for header, body in zip(
            SECTION_ORDER,
            (self.role_text, self.instruction_text, self.context_text, self.format_text),
        ):
            parts.append(f"## {header}\n{body}")
        return "\n\n".join(parts)


def packaged_template_dir() -> Path:
    return Path(__file__).parent / "templates"


class PromptTemplates:
    """The six template assets for one locale, loaded once."""

    def __init__(self, locale: str = DEFAULT_LOCALE, directory: str | Path | None = None):
        base = Path(directory) if directory else packaged_template_dir()
        self.locale = locale
        self.directory = base / locale
        if not self.directory.is_dir():
            raise PromptError(f"no prompt templates for locale {locale!r} under {base}")
        self._raw: dict[str, str] = {}
        for name in _TEMPLATE_FILES:
            path = self.directory / name
            if not path.is_file():
                raise PromptError(f"missing template asset {path}")
            self._raw[name] = _strip_headers(path.read_text(encoding="utf-8"))

    def raw(self, name: str) -> str:
        return self._raw[name]

    def instruction_for(self, label: StrategyLabel) -> Template:
        return Template(self._raw[f"instruction_{label.value}.txt"])

    @property
    def role(self) -> Template:
        return Template(self._raw["role.txt"])

    @property
    def context(self) -> Template:
        return Template(self._raw["context.txt"])

    @property
    def format(self) -> Template:
        return Template(self._raw["format.txt"])


def _strip_headers(text: str) -> str:
    lines = [line for line in text.split("\n") if not line.startswith("#:")]
    return "\n".join(lines).strip("\n")


def construct_prompt(
    label: StrategyLabel,
    product: Product,
    attribute: AttributeRecord,
    new_value: str,
    constraints: StoreConstraints,
    negative_value: str | None = None,
    brand_lexicon: tuple[str, ...] = (),
    templates: PromptTemplates | None = None,
) -> tuple[PromptSections, str]:
    """Compose the generation prompt; returns (sections, rendered string).

    The rendered prompt embeds every non-empty text field verbatim inside a
    delimiter block, the attribute, the current and target values, and (for
    the inconsistency strategy) the conflicting value.
    """
    if not new_value:
        raise PromptError("new_value must be non-empty for every strategy")
    if label is StrategyLabel.INCORRECT and not negative_value:
        raise PromptError("negative_value is required for the inconsistency strategy")
    fields = product.canonical_fields()
    if not any(fields.values()):
        raise PromptError(f"product {product.id!r} has no usable text fields")
    templates = templates or PromptTemplates()

    subs = {
        "category": product.category,
        "attribute_key": attribute.key,
        "original_value": attribute.value,
        "new_value": new_value,
        "negative_value": negative_value or "",
        "conflict_line": (
            f"{LABEL_CONFLICT_VALUE}{negative_value}\n"
            if label is StrategyLabel.INCORRECT
            else ""
        ),
        "brand_list": ", ".join(brand_lexicon) if brand_lexicon else "(none)",
        "locale_id": constraints.locale_id,
        "unit_system": constraints.unit_system,
        "currency_symbol": constraints.currency_symbol,
        "language_tag": constraints.language_tag,
        "title": fields["title"],
        "description": fields["description"],
        "features": fields["features"],
    }

    sections = PromptSections(
        role_text=templates.role.substitute(subs),
        instruction_text=templates.instruction_for(label).substitute(subs),
        context_text=templates.context.substitute(subs),
        format_text=templates.format.substitute(subs),
    )
    return sections, sections.render()


def output_contract() -> dict:
    """Machine-checkable schema for the generation response document."""
    return {
        "type": "object",
        "required": list(OUTPUT_CONTRACT_KEYS),
        "additionalProperties": False,
        "properties": {
            "title": {"type": "string"},
            "description": {"type": "string"},
            "features": {"type": "string"},
            "brand_replacements": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["original", "replacement"],
                    "additionalProperties": False,
                    "properties": {
                        "original": {"type": "string"},
                        "replacement": {"type": "string"},
                    },
                },
            },
            "change_notes": {"type": "string"},
        },
    }


def validate_output_document(doc: object) -> list[str]:
    """Check a parsed response against the output contract.

    Returns field-level diagnostics; empty list means valid.  Unknown keys
    are rejected (strict mode) so provider drift surfaces immediately.
    """
    if not isinstance(doc, dict):
        return [f"expected a JSON object, got {type(doc).__name__}"]
    errors = []
    for key in OUTPUT_CONTRACT_KEYS:
        if key not in doc:
            errors.append(f"missing key: {key}")
    for key in doc:
        if key not in OUTPUT_CONTRACT_KEYS:
            errors.append(f"unknown key: {key}")
    for key in OUTPUT_FIELD_KEYS + ("change_notes",):
        if key in doc and not isinstance(doc[key], str):
            errors.append(f"{key}: expected string")
    if "brand_replacements" in doc:
        reps = doc["brand_replacements"]
        if not isinstance(reps, list):
            errors.append("brand_replacements: expected array")
        else:
            for i, item in enumerate(reps):
                if not isinstance(item, dict):
                    errors.append(f"brand_replacements[{i}]: expected object")
                    continue
                for field_name in ("original", "replacement"):
                    if field_name not in item:
                        errors.append(f"brand_replacements[{i}]: missing key: {field_name}")
                    elif not isinstance(item[field_name], str):
                        errors.append(f"brand_replacements[{i}].{field_name}: expected string")
                for extra in item:
                    if extra not in ("original", "replacement"):
                        errors.append(f"brand_replacements[{i}]: unknown key: {extra}")
    return errors
