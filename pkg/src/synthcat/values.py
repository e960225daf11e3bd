"""Attribute value generation and negative-value selection.

New target values come from a dedicated high-temperature model call (the
value provider).  Negative values for the inconsistency strategy are picked
from a candidate pool by embedding similarity: the least-similar candidate
wins, and anything above the similarity ceiling is excluded as too close to
the correct value.  When no embedding service is configured, a hashed
character-trigram embedder stands in; it is deterministic and dependency-free.
"""

from __future__ import annotations

import re
import threading
import zlib
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from synthcat.gateway import ChatRequest, LLMGateway, TokenUsage

VALUE_TAG = "value_provider"
POOL_TAG = "value_pool"

DEFAULT_POOL_SIZE = 8
DEFAULT_SIMILARITY_CEILING = 0.80
EMBEDDING_DIM = 512
_TRIGRAM_SALT = b"synthcat.v1:"

# VP request line labels; the deterministic mock provider parses these.
VP_SINGLE_HEADER = "Propose one realistic value for a product attribute."
VP_POOL_HEADER = "List {n} distinct realistic values for a product attribute, one per line."
VP_LABEL_CATEGORY = "Category: "
VP_LABEL_ATTRIBUTE = "Attribute: "
VP_LABEL_DATA_TYPE = "Data type: "
VP_LABEL_UNITS = "Valid units: "
VP_LABEL_ALLOWED = "Allowed values: "
VP_LABEL_EXCLUDE = "Exclude: "
VP_FOOTER = "Respond with the value(s) only, no commentary."


class ValueGenerationError(Exception):
    """The value provider failed to produce a usable value."""


class PoolError(ValueGenerationError):
    """Candidate pool construction left fewer than two usable candidates."""


class NoDistinctCandidateError(ValueGenerationError):
    """Every pool candidate was too similar to the correct value."""


@dataclass(frozen=True)
class AttributeMetadata:
    """Typing constraints for one attribute key.

    data_type is one of text, numeric, enumerated.  Enumerated attributes
    must carry a non-empty allowed_values list; numeric ones may carry
    valid_units.
    """

    key: str
    data_type: str = "text"
    valid_units: tuple[str, ...] = ()
    allowed_values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.data_type not in ("text", "numeric", "enumerated"):
            raise ValueError(f"unknown data_type {self.data_type!r} for {self.key!r}")
        if self.data_type == "enumerated" and not self.allowed_values:
            raise ValueError(f"enumerated attribute {self.key!r} needs allowed_values")


def validate_value(value: str, meta: AttributeMetadata | None) -> str | None:
    """Return a rejection reason, or None when the value fits the metadata."""
    if not value or not value.strip():
        return "empty value"
    if meta is None:
        return None
    v = value.strip()
    if meta.data_type == "enumerated":
        allowed = {a.lower() for a in meta.allowed_values}
        if v.lower() not in allowed:
            return f"{v!r} not in allowed values for {meta.key!r}"
    elif meta.data_type == "numeric":
        m = re.match(r"^\d+(\.\d+)?\s*(.*)$", v)
        if not m:
            return f"{v!r} is not numeric"
        unit = m.group(2).strip()
        if meta.valid_units:
            units = {u.lower() for u in meta.valid_units}
            u = unit.lower()
            # Tolerate plural unit surface forms ("inches", "pounds").
            if u not in units and u.removesuffix("s") not in units and u.removesuffix("es") not in units:
                return f"unit {unit!r} not valid for {meta.key!r}"
    return None


def load_metadata(path) -> dict[str, AttributeMetadata]:
    """Load an attribute metadata registry from a JSON object file."""
    import json
    from pathlib import Path

    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError("metadata file must hold a JSON object keyed by attribute")
    registry = {}
    for key, spec in raw.items():
        registry[key.lower()] = AttributeMetadata(
            key=key,
            data_type=spec.get("data_type", "text"),
            valid_units=tuple(spec.get("valid_units", ())),
            allowed_values=tuple(spec.get("allowed_values", ())),
        )
    return registry


@dataclass(frozen=True)
class EmbeddingVector:
    dimensions: np.ndarray
    source_text: str

    def __post_init__(self):
        arr = np.asarray(self.dimensions, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a non-empty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding has non-finite entries")
        if float(np.linalg.norm(arr)) == 0.0:
            raise ValueError("embedding has zero norm")
        object.__setattr__(self, "dimensions", arr)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    num = float(np.dot(a.dimensions, b.dimensions))
    den = float(np.linalg.norm(a.dimensions) * np.linalg.norm(b.dimensions))
    return num / den


class Embedder(Protocol):
    def embed_text(self, text: str) -> EmbeddingVector: ...


class TrigramEmbedder:
    """Hashed character-trigram embedding, L2-normalized.

    The text is lowercased and padded with one space on each side so that
    word boundaries contribute trigrams.  Each trigram increments one of
    ``dim`` buckets chosen by a salted CRC32, making the vector a stable
    function of the text alone.  Crude, but it ranks surface-form relatives
    closer than unrelated strings, which is all negative selection needs.
    """

    def __init__(self, dim: int = EMBEDDING_DIM):
        if dim < 8:
            raise ValueError("embedding dimension is too small to be useful")
        self.dim = dim

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        padded = f" {text.lower()} "
        counts = np.zeros(self.dim, dtype=np.float64)
        for i in range(len(padded) - 2):
            tri = padded[i : i + 3].encode("utf-8")
            counts[zlib.crc32(_TRIGRAM_SALT + tri) % self.dim] += 1.0
        counts /= np.linalg.norm(counts)
        return EmbeddingVector(dimensions=counts, source_text=text)


class RemoteEmbedder:
    """Embedding-service client: POST {"input": text} -> {"embedding": [..]}."""

    def __init__(self, endpoint: str, timeout: float = 30.0, session=None):
        import requests

        if not endpoint:
            raise ValueError("remote embedder needs an endpoint")
        self.endpoint = endpoint
        self.timeout = timeout
        self._session = session or requests.Session()

    def embed_text(self, text: str) -> EmbeddingVector:
        resp = self._session.post(self.endpoint, json={"input": text}, timeout=self.timeout)
        resp.raise_for_status()
        vec = resp.json()["embedding"]
        return EmbeddingVector(dimensions=np.asarray(vec, dtype=np.float64), source_text=text)


@dataclass(frozen=True)
class ValuePool:
    """Deduplicated candidate values for one attribute.

    provenance is parallel to candidates: "llm" for provider suggestions,
    "metadata" for entries backfilled from an enumerated allowlist.
    """

    attribute_key: str
    candidates: tuple[str, ...]
    provenance: tuple[str, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidate pool must be non-empty")
        if len(self.candidates) != len(self.provenance):
            raise ValueError("provenance must be parallel to candidates")
        lowered = [c.lower() for c in self.candidates]
        if len(set(lowered)) != len(lowered):
            raise ValueError("candidate pool has case-insensitive duplicates")
        for p in self.provenance:
            if p not in ("llm", "metadata"):
                raise ValueError(f"unknown provenance tag {p!r}")


def select_negative_value(
    pool: ValuePool,
    correct_value: str,
    embedder: Embedder | None = None,
    similarity_ceiling: float = DEFAULT_SIMILARITY_CEILING,
) -> str:
    """Pick the candidate least similar to the correct value.

    Candidates whose cosine similarity exceeds the ceiling are dropped as
    near-duplicates.  Ties on similarity break lexicographically so the
    choice is reproducible across runs.
    """
    embedder = embedder or TrigramEmbedder()
    anchor = embedder.embed_text(correct_value)
    scored = []
    for candidate in pool.candidates:
        if candidate.lower() == correct_value.lower():
            continue
        sim = cosine_similarity(embedder.embed_text(candidate), anchor)
        if sim > similarity_ceiling:
            continue
        scored.append((sim, candidate))
    if not scored:
        raise NoDistinctCandidateError(
            f"no semantically distinct candidate for {pool.attribute_key!r} "
            f"(ceiling {similarity_ceiling})"
        )
    scored.sort(key=lambda pair: (pair[0], pair[1]))
    return scored[0][1]


class UsageCollector:
    """Task-local accumulator for token usage across provider calls."""

    def __init__(self):
        self.total = TokenUsage(0, 0)

    def add(self, usage: TokenUsage):
        self.total = self.total + usage


_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def _clean_candidate(line: str) -> str:
    line = _BULLET_RE.sub("", line.strip())
    return line.strip().strip('"').strip("'").strip()


@dataclass
class ValueProviderConfig:
    temperature: float = 1.0
    pool_size: int = DEFAULT_POOL_SIZE
    max_retries: int = 3
    similarity_ceiling: float = DEFAULT_SIMILARITY_CEILING
    max_output_tokens: int = 64

    def __post_init__(self):
        if self.pool_size < 2:
            raise ValueError("pool_size must be at least 2")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if not 0.0 < self.similarity_ceiling <= 1.0:
            raise ValueError("similarity_ceiling must be in (0, 1]")


class ValueProvider:
    """High-temperature value suggestions with a per-run diversity registry.

    The registry tracks values already issued per (category, attribute key)
    and feeds them back as exclusions, so repeated tasks over the same
    attribute spread across the value space.  When an enumerated attribute
    runs out of unused allowed values the registry window resets rather than
    failing the task.
    """

    def __init__(
        self,
        gateway: LLMGateway,
        config: ValueProviderConfig | None = None,
        embedder: Embedder | None = None,
        metadata: dict[str, AttributeMetadata] | None = None,
    ):
        self.gateway = gateway
        self.config = config or ValueProviderConfig()
        self.embedder = embedder or TrigramEmbedder()
        self.metadata = metadata or {}
        self._used: dict[tuple[str, str], list[str]] = {}
        self._lock = threading.Lock()

    def metadata_for(self, key: str) -> AttributeMetadata | None:
        return self.metadata.get(key.lower())

    def used_values(self, category: str, key: str) -> list[str]:
        with self._lock:
            return list(self._used.get((category.lower(), key.lower()), ()))

    def _note_used(self, category: str, key: str, value: str):
        with self._lock:
            bucket = self._used.setdefault((category.lower(), key.lower()), [])
            if value.lower() not in (v.lower() for v in bucket):
                bucket.append(value)

    def _reset_used(self, category: str, key: str):
        with self._lock:
            self._used.pop((category.lower(), key.lower()), None)

    def _request(self, header: str, category: str, key: str, exclude: Sequence[str], tag: str) -> ChatRequest:
        meta = self.metadata_for(key)
        lines = [header, f"{VP_LABEL_CATEGORY}{category}", f"{VP_LABEL_ATTRIBUTE}{key}"]
        if meta is not None:
            lines.append(f"{VP_LABEL_DATA_TYPE}{meta.data_type}")
            if meta.valid_units:
                lines.append(f"{VP_LABEL_UNITS}{', '.join(meta.valid_units)}")
            if meta.allowed_values:
                lines.append(f"{VP_LABEL_ALLOWED}{', '.join(meta.allowed_values)}")
        if exclude:
            lines.append(f"{VP_LABEL_EXCLUDE}{', '.join(exclude)}")
        lines.append(VP_FOOTER)
        return ChatRequest(
            system_text="",
            user_text="\n".join(lines),
            temperature=self.config.temperature,
            max_output_tokens=self.config.max_output_tokens,
            request_tag=tag,
        )

    def _effective_exclusions(self, category: str, key: str, extra: Sequence[str]) -> list[str]:
        meta = self.metadata_for(key)
        used = self.used_values(category, key)
        merged: list[str] = []
        for value in list(extra) + used:
            if value and value.lower() not in (m.lower() for m in merged):
                merged.append(value)
        if meta is not None and meta.data_type == "enumerated":
            remaining = {a.lower() for a in meta.allowed_values} - {m.lower() for m in merged}
            if not remaining:
                # Diversity window exhausted the allowlist; start a new window
                # but keep the caller's hard exclusions (e.g. the original value).
                self._reset_used(category, key)
                merged = [v for v in extra if v]
        return merged

    def generate_value(
        self,
        category: str,
        key: str,
        exclude: Sequence[str] = (),
        usage: UsageCollector | None = None,
    ) -> str:
        """One validated value for (category, key), avoiding exclusions."""
        meta = self.metadata_for(key)
        exclusions = self._effective_exclusions(category, key, exclude)
        last_reason = "no candidate produced"
        for _ in range(self.config.max_retries + 1):
            req = self._request(VP_SINGLE_HEADER, category, key, exclusions, VALUE_TAG)
            resp = self.gateway.complete(req)
            if usage is not None:
                usage.add(resp.usage)
            candidate = ""
            for line in resp.text.splitlines():
                candidate = _clean_candidate(line)
                if candidate:
                    break
            if not candidate:
                last_reason = "provider returned no value"
                continue
            reason = validate_value(candidate, meta)
            if reason is None and candidate.lower() in (e.lower() for e in exclusions):
                reason = f"{candidate!r} is excluded"
            if reason is None:
                self._note_used(category, key, candidate)
                return candidate
            last_reason = reason
            if candidate.lower() not in (e.lower() for e in exclusions):
                exclusions.append(candidate)
        raise ValueGenerationError(f"value generation failed for {key!r}: {last_reason}")

    def generate_value_pool(
        self,
        category: str,
        key: str,
        pool_size: int | None = None,
        exclude: Sequence[str] = (),
        usage: UsageCollector | None = None,
    ) -> ValuePool:
        """Candidate pool for negative selection; at least two survivors."""
        meta = self.metadata_for(key)
        n = pool_size or self.config.pool_size
        exclusions = [v for v in exclude if v]
        req = self._request(VP_POOL_HEADER.format(n=n), category, key, exclusions, POOL_TAG)
        resp = self.gateway.complete(req)
        if usage is not None:
            usage.add(resp.usage)

        candidates: list[str] = []
        provenance: list[str] = []
        seen = {e.lower() for e in exclusions}
        for line in resp.text.splitlines():
            value = _clean_candidate(line)
            if not value or value.lower() in seen:
                continue
            if validate_value(value, meta) is not None:
                continue
            candidates.append(value)
            provenance.append("llm")
            seen.add(value.lower())
            if len(candidates) >= n:
                break
        if meta is not None and meta.data_type == "enumerated" and len(candidates) < n:
            for value in meta.allowed_values:
                if value.lower() in seen:
                    continue
                candidates.append(value)
                provenance.append("metadata")
                seen.add(value.lower())
                if len(candidates) >= n:
                    break
        if len(candidates) < 2:
            raise PoolError(
                f"pool for {key!r} has {len(candidates)} usable candidate(s); need at least 2"
            )
        return ValuePool(attribute_key=key, candidates=tuple(candidates), provenance=tuple(provenance))

    def generate_negative_value(
        self,
        category: str,
        key: str,
        correct_value: str,
        usage: UsageCollector | None = None,
    ) -> str:
        """Plausible-but-wrong value, semantically distinct from the correct one."""
        pool = self.generate_value_pool(category, key, exclude=[correct_value], usage=usage)
        return select_negative_value(
            pool,
            correct_value,
            embedder=self.embedder,
            similarity_ceiling=self.config.similarity_ceiling,
        )
