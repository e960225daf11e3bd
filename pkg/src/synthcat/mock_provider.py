"""Deterministic in-process provider for offline runs and tests.

The mock keys every response on a hash of the request text, never on call
order, so concurrent batches stay reproducible.  Generation prompts are
answered by actually performing the requested edit on the field blocks
embedded in the prompt; value-provider prompts get stable synthetic values.
Responses deliberately carry a line of prose before the JSON document to
exercise the tolerant output parser.
"""

from __future__ import annotations

import hashlib
import json
import re
import zlib
from typing import Callable, Mapping

from synthcat import prompts, values
from synthcat.gateway import ChatRequest, TokenUsage, whitespace_token_count
from synthcat.strategies import StrategyLabel

RESPONSE_PREAMBLE = "Here is the updated product listing:"

FICTIONAL_BRANDS = (
    "Northwind",
    "Bluecrest",
    "Harborline",
    "Quartzon",
    "Fernvale",
    "Stratobe",
    "Maplecore",
    "Tidewell",
)

_POOL_HEADER_RE = re.compile(r"^List (\d+) distinct realistic values")
_FIELD_BLOCK_RE = {
    "title": re.compile(r"Title:\n<<<\n(.*?)\n>>>", re.DOTALL),
    "description": re.compile(r"Description:\n<<<\n(.*?)\n>>>", re.DOTALL),
    "features": re.compile(r"Features:\n<<<\n(.*?)\n>>>", re.DOTALL),
}


def _digest(text: str) -> int:
    return int(hashlib.sha256(text.encode("utf-8")).hexdigest()[:12], 16)


def _line_value(text: str, label: str) -> str | None:
    for line in text.split("\n"):
        if line.startswith(label):
            return line[len(label):].strip()
    return None


def _word_pattern(word: str) -> re.Pattern:
    return re.compile(rf"(?<!\w){re.escape(word)}(?!\w)", re.IGNORECASE)


def _replace_word(text: str, word: str, replacement: str) -> str:
    return _word_pattern(word).sub(replacement, text)


def _remove_word(text: str, word: str) -> str:
    out = _word_pattern(word).sub("", text)
    lines = []
    for line in out.split("\n"):
        line = re.sub(r"[ \t]{2,}", " ", line)
        line = re.sub(r"\s+([,.;:!?)])", r"\1", line)
        lines.append(line.strip())
    return "\n".join(line for line in lines if line)


class MockProvider:
    """Provider stand-in that is a pure function of the request content.

    fixtures maps (request_tag, exact user text) to a canned response string
    or an exception instance to raise; fail_hook, when set, is consulted
    first and may return an exception to raise for that request.
    """

    provider_id = "mock"

    def __init__(
        self,
        fixtures: Mapping[tuple[str, str], object] | None = None,
        fail_hook: Callable[[ChatRequest], Exception | None] | None = None,
    ):
        self.fixtures = dict(fixtures or {})
        self.fail_hook = fail_hook

    def complete(self, request: ChatRequest) -> tuple[str, TokenUsage]:
        if self.fail_hook is not None:
            err = self.fail_hook(request)
            if err is not None:
                raise err
        canned = self.fixtures.get((request.request_tag, request.user_text))
        if isinstance(canned, Exception):
            raise canned
        if canned is not None:
            return str(canned), self._usage(request, str(canned))

        text = request.user_text
        if text.startswith(values.VP_SINGLE_HEADER):
            out = self._single_value(text)
        elif _POOL_HEADER_RE.match(text):
            out = self._value_pool(text)
        else:
            out = self._generation(text)
        return out, self._usage(request, out)

    @staticmethod
    def _usage(request: ChatRequest, out: str) -> TokenUsage:
        inp = whitespace_token_count(request.system_text) + whitespace_token_count(request.user_text)
        return TokenUsage(input_tokens=inp, output_tokens=whitespace_token_count(out))

    # -- value provider ----------------------------------------------------

    @staticmethod
    def _vp_fields(text: str):
        key = _line_value(text, values.VP_LABEL_ATTRIBUTE) or "value"
        data_type = _line_value(text, values.VP_LABEL_DATA_TYPE) or "text"
        units = [u.strip() for u in (_line_value(text, values.VP_LABEL_UNITS) or "").split(",") if u.strip()]
        allowed = [a.strip() for a in (_line_value(text, values.VP_LABEL_ALLOWED) or "").split(",") if a.strip()]
        exclude = {
            e.strip().lower()
            for e in (_line_value(text, values.VP_LABEL_EXCLUDE) or "").split(",")
            if e.strip()
        }
        return key, data_type, units, allowed, exclude

    def _single_value(self, text: str) -> str:
        key, data_type, units, allowed, exclude = self._vp_fields(text)
        h = _digest(text)
        if allowed:
            options = [a for a in allowed if a.lower() not in exclude]
            if not options:
                options = allowed
            return options[h % len(options)]
        if data_type == "numeric":
            unit = units[0] if units else ""
            for probe in range(90):
                number = 10 + (h + probe) % 90
                candidate = f"{number} {unit}".strip()
                if candidate.lower() not in exclude:
                    return candidate
            return f"{10 + h % 90} {unit}".strip()
        slug = re.sub(r"[^a-z0-9]+", "-", key.lower()).strip("-") or "value"
        for probe in range(1000):
            candidate = f"{slug}-{(h + probe) % 100000:05d}"
            if candidate.lower() not in exclude:
                return candidate
        return f"{slug}-{h % 100000:05d}"

    def _value_pool(self, text: str) -> str:
        key, data_type, units, allowed, exclude = self._vp_fields(text)
        n = int(_POOL_HEADER_RE.match(text).group(1))
        h = _digest(text)
        out: list[str] = []
        seen = set(exclude)
        if allowed:
            for j in range(len(allowed)):
                candidate = allowed[(h + j) % len(allowed)]
                if candidate.lower() in seen:
                    continue
                out.append(candidate)
                seen.add(candidate.lower())
                if len(out) >= n:
                    break
        elif data_type == "numeric":
            unit = units[0] if units else ""
            j = 0
            while len(out) < n and j < 400:
                candidate = f"{10 + (h + 7 * j) % 90} {unit}".strip()
                j += 1
                if candidate.lower() in seen:
                    continue
                out.append(candidate)
                seen.add(candidate.lower())
        else:
            slug = re.sub(r"[^a-z0-9]+", "-", key.lower()).strip("-") or "value"
            j = 0
            while len(out) < n and j < 4000:
                candidate = f"{slug}-{(h + 13 * j) % 100000:05d}"
                j += 1
                if candidate.lower() in seen:
                    continue
                out.append(candidate)
                seen.add(candidate.lower())
        return "\n".join(out)

    # -- generation --------------------------------------------------------

    def _generation(self, text: str) -> str:
        label = None
        for strategy, marker in prompts.STRATEGY_MARKERS.items():
            if marker in text:
                label = strategy
                break

        category = _line_value(text, prompts.LABEL_CATEGORY) or "item"
        key = _line_value(text, prompts.LABEL_ATTRIBUTE) or "attribute"
        original = _line_value(text, prompts.LABEL_CURRENT_VALUE) or ""
        target = _line_value(text, prompts.LABEL_TARGET_VALUE) or ""
        negative = _line_value(text, prompts.LABEL_CONFLICT_VALUE) or ""
        brand_line = _line_value(text, prompts.LABEL_BRANDS) or "(none)"
        brands = [] if brand_line == "(none)" else [b.strip() for b in brand_line.split(",") if b.strip()]

        fields: dict[str, str] = {}
        for name, pattern in _FIELD_BLOCK_RE.items():
            m = pattern.search(text)
            fields[name] = m.group(1) if m else ""

        if label is None or not any(_FIELD_BLOCK_RE[n].search(text) for n in _FIELD_BLOCK_RE):
            # Not one of our structured prompts; echo a minimal valid document.
            echo = target or (text.split()[-1] if text.split() else "item")
            doc = {
                "title": f"Sample item {echo}",
                "description": f"A sample response mentioning {echo}.",
                "features": f"Includes {echo}",
                "brand_replacements": [],
                "change_notes": "Produced a templated sample response.",
            }
            return f"{RESPONSE_PREAMBLE}\n{json.dumps(doc, ensure_ascii=False, indent=2)}"

        if label is StrategyLabel.CORRECT:
            if original:
                fields = {k: _replace_word(v, original, target) for k, v in fields.items()}
            if not fields["description"].strip():
                fields["description"] = f"An updated {category.lower()} listing where {key.lower()} is {target}."
            joined = "\n".join(fields.values()).lower()
            if target.lower() not in joined:
                fields["title"] = f"{fields['title']} ({target})".strip()
        elif label is StrategyLabel.INCORRECT:
            if not fields["description"].strip():
                fields["description"] = f"A {category.lower()} listing that keeps {key.lower()} at {target}."
            fields["description"] = f"{fields['description']} Some buyers report it as {negative}."
        elif label is StrategyLabel.UNKNOWN:
            for word in (original, target):
                if word:
                    fields = {k: _remove_word(v, word) for k, v in fields.items()}
            if not fields["description"].strip():
                fields["description"] = f"A dependable {category.lower()} option for everyday use."

        replacements = []
        taken: set[str] = set()
        for brand in brands:
            if not any(_word_pattern(brand).search(v) for v in fields.values()):
                continue
            idx = zlib.crc32(brand.lower().encode("utf-8")) % len(FICTIONAL_BRANDS)
            while FICTIONAL_BRANDS[idx] in taken:
                idx = (idx + 1) % len(FICTIONAL_BRANDS)
            alias = FICTIONAL_BRANDS[idx]
            taken.add(alias)
            fields = {k: _replace_word(v, brand, alias) for k, v in fields.items()}
            replacements.append({"original": brand, "replacement": alias})

        doc = {
            "title": fields["title"],
            "description": fields["description"],
            "features": fields["features"],
            "brand_replacements": replacements,
            "change_notes": f"Adjusted the {key.lower()} content as instructed.",
        }
        return f"{RESPONSE_PREAMBLE}\n{json.dumps(doc, ensure_ascii=False, indent=2)}"


class RecordingProvider:
    """Wraps a provider and keeps every request, for prompt audits in tests."""

    def __init__(self, inner):
        self.inner = inner
        self.requests: list[ChatRequest] = []

    @property
    def provider_id(self) -> str:
        return f"recording({self.inner.provider_id})"

    def complete(self, request: ChatRequest) -> tuple[str, TokenUsage]:
        self.requests.append(request)
        return self.inner.complete(request)
