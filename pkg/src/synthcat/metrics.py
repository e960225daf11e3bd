"""Corpus quality metrics and run cost estimation.

The quality checks compare synthetic listings against their base listings
per text field: lexical diversity (type-token ratio), distribution shift
(smoothed KL divergence of token frequencies), and semantic drift (mean
pairwise embedding cosine).  The cost model prices a standard two-call task
(one value-provider call, one generation call) from per-million token rates.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from synthcat.values import Embedder, TrigramEmbedder, cosine_similarity

_TOKEN_RE = re.compile(r"\S+")


def _tokens(text: str) -> list[str]:
    return [t.lower() for t in _TOKEN_RE.findall(text)]


def type_token_ratio(texts: Sequence[str]) -> float:
    """Mean unique-to-total token ratio across non-empty texts."""
    ratios = []
    for text in texts:
        tokens = _tokens(text)
        if tokens:
            ratios.append(len(set(tokens)) / len(tokens))
    if not ratios:
        raise ValueError("type_token_ratio needs at least one non-empty text")
    return sum(ratios) / len(ratios)


def token_distribution_kl(
    original_texts: Sequence[str],
    synthetic_texts: Sequence[str],
) -> float:
    """KL(original || synthetic) over token frequencies, add-one smoothed.

    Both distributions live on the union vocabulary so the divergence is
    always finite; natural log.  Zero iff the token counts coincide.
    """
    p_counts = Counter()
    q_counts = Counter()
    for text in original_texts:
        p_counts.update(_tokens(text))
    for text in synthetic_texts:
        q_counts.update(_tokens(text))
    vocab = set(p_counts) | set(q_counts)
    if not vocab:
        raise ValueError("token_distribution_kl needs non-empty inputs")
    p_total = sum(p_counts.values()) + len(vocab)
    q_total = sum(q_counts.values()) + len(vocab)
    kl = 0.0
    for token in vocab:
        p = (p_counts[token] + 1) / p_total
        q = (q_counts[token] + 1) / q_total
        kl += p * math.log(p / q)
    return kl


def field_cosine_similarity(
    original_texts: Sequence[str],
    synthetic_texts: Sequence[str],
    embedder: Embedder | None = None,
) -> float:
    """Mean embedding cosine over aligned (original, synthetic) text pairs."""
    if len(original_texts) != len(synthetic_texts):
        raise ValueError("cosine similarity needs aligned text lists")
    embedder = embedder or TrigramEmbedder()
    sims = []
    for orig, synth in zip(original_texts, synthetic_texts):
        if not orig.strip() or not synth.strip():
            continue
        sims.append(
            cosine_similarity(embedder.embed_text(orig), embedder.embed_text(synth))
        )
    if not sims:
        raise ValueError("no non-empty pairs to compare")
    return sum(sims) / len(sims)


@dataclass(frozen=True)
class FieldMetrics:
    field: str
    ttr_original: float
    ttr_synthetic: float
    kl_divergence: float
    cosine: float


def compute_field_metrics(
    pairs: Sequence[tuple[Mapping[str, str], Mapping[str, str]]],
    fields: Sequence[str] = ("title", "description", "features"),
    embedder: Embedder | None = None,
) -> list[FieldMetrics]:
    """Per-field metrics over (base_fields, synthetic_fields) pairs."""
    if not pairs:
        raise ValueError("no pairs to evaluate")
    embedder = embedder or TrigramEmbedder()
    out = []
    for name in fields:
        originals = [base.get(name, "") for base, _ in pairs]
        synthetics = [synth.get(name, "") for _, synth in pairs]
        aligned = [(o, s) for o, s in zip(originals, synthetics) if o.strip() and s.strip()]
        if not aligned:
            continue
        o_texts = [o for o, _ in aligned]
        s_texts = [s for _, s in aligned]
        out.append(
            FieldMetrics(
                field=name,
                ttr_original=type_token_ratio(o_texts),
                ttr_synthetic=type_token_ratio(s_texts),
                kl_divergence=token_distribution_kl(o_texts, s_texts),
                cosine=field_cosine_similarity(o_texts, s_texts, embedder),
            )
        )
    return out


@dataclass(frozen=True)
class CostModel:
    """Per-task token profile and per-million pricing, in dollars."""

    price_per_m_input: float = 0.80
    price_per_m_output: float = 4.00
    value_input_tokens: int = 402
    value_output_tokens: int = 10
    generation_input_tokens: int = 1540
    generation_output_tokens: int = 141

    def __post_init__(self):
        if self.price_per_m_input < 0 or self.price_per_m_output < 0:
            raise ValueError("prices must be non-negative")

    def per_product_cost(self) -> float:
        input_tokens = self.value_input_tokens + self.generation_input_tokens
        output_tokens = self.value_output_tokens + self.generation_output_tokens
        return (
            input_tokens * self.price_per_m_input / 1_000_000
            + output_tokens * self.price_per_m_output / 1_000_000
        )

    def batch_cost(self, n_products: int) -> float:
        if n_products < 0:
            raise ValueError("n_products must be non-negative")
        return self.per_product_cost() * n_products


def estimate_cost(n_products: int, model: CostModel | None = None) -> float:
    return (model or CostModel()).batch_cost(n_products)


def cost_from_usage(
    input_tokens: int,
    output_tokens: int,
    model: CostModel | None = None,
) -> float:
    """Price measured token totals instead of the standard per-task profile."""
    model = model or CostModel()
    return (
        input_tokens * model.price_per_m_input / 1_000_000
        + output_tokens * model.price_per_m_output / 1_000_000
    )
