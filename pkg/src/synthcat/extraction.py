"""Attribute-extraction fine-tuning harness.

Builds the six training mixtures used to measure how synthetic listings
trade off against originals (all-original, all-synthetic, three hybrids,
and an untrained baseline), always evaluated on the same held-out set of
original listings.  Scoring distinguishes exact matches from matches that
survive value normalization, and sorts residual mismatches into a fixed
ladder of surface-variation categories before calling anything an error.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Iterable, Mapping, Sequence

from synthcat.values import Embedder, TrigramEmbedder, cosine_similarity

UNITS_PATH = Path(__file__).parent / "assets" / "units.txt"

DEFAULT_TOKEN_BUDGET = 512
TRAIN_FRACTION = 0.8
SYNONYM_SIMILARITY = 0.85

MISMATCH_CATEGORIES = (
    "morphological",
    "missing_units",
    "granularity",
    "format_variation",
    "contextual_synonym",
    "equivalent_definition",
    "multiple_valid",
    "true_error",
)


class ExtractionError(Exception):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    """One training mixture; fractions refer to the shared training pool."""

    name: str
    original_fraction: float
    synthetic_fraction: float

    def __post_init__(self):
        total = self.original_fraction + self.synthetic_fraction
        if self.name != "zero_shot" and abs(total - 1.0) > 1e-9:
            raise ValueError(f"fractions for {self.name!r} must sum to 1, got {total:g}")
        if self.name == "zero_shot" and total != 0.0:
            raise ValueError("zero_shot trains on nothing")


DATASET_CONFIGS = (
    DatasetConfig("zero_shot", 0.0, 0.0),
    DatasetConfig("original_100", 1.0, 0.0),
    DatasetConfig("synthetic_100", 0.0, 1.0),
    DatasetConfig("hybrid_75_25", 0.75, 0.25),
    DatasetConfig("hybrid_50_50", 0.50, 0.50),
    DatasetConfig("hybrid_25_75", 0.25, 0.75),
)


@dataclass(frozen=True)
class SourceExample:
    """One (listing, attribute) pair available for dataset assembly."""

    product_id: str
    attribute_key: str
    value: str
    fields: Mapping[str, str]
    source: str  # original | synthetic

    def __post_init__(self):
        if self.source not in ("original", "synthetic"):
            raise ValueError(f"unknown source {self.source!r}")


@dataclass(frozen=True)
class ExtractionExample:
    input_text: str
    target: str
    product_id: str
    source: str

    def to_line(self) -> str:
        return f"{self.input_text}\t{self.target}"


_WS_RE = re.compile(r"\s+")


def _sanitize(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def build_input(
    attribute_key: str,
    fields: Mapping[str, str],
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> str:
    """Single-line model input with fixed field order and a token budget.

    Over budget, content is dropped from the description tail first, then
    the features, and only then the title.
    """
    if token_budget < 8:
        raise ExtractionError("token budget is too small for the scaffold")
    parts = {
        "title": _sanitize(fields.get("title", "")).split(),
        "description": _sanitize(fields.get("description", "")).split(),
        "features": _sanitize(fields.get("features", "")).split(),
    }

    def render() -> str:
        return (
            f"extract {attribute_key} | "
            f"title: {' '.join(parts['title'])} | "
            f"description: {' '.join(parts['description'])} | "
            f"features: {' '.join(parts['features'])}"
        )

    for name in ("description", "features", "title"):
        while len(render().split()) > token_budget and parts[name]:
            parts[name].pop()
    return render()


def example_from_source(
    src: SourceExample,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> ExtractionExample:
    gold = _sanitize(src.value)
    if not gold:
        raise ExtractionError(f"empty gold value for {src.product_id!r}")
    return ExtractionExample(
        input_text=build_input(src.attribute_key, src.fields, token_budget),
        target=gold,
        product_id=src.product_id,
        source=src.source,
    )


def originals_from_run(records: Iterable[Mapping]) -> list[SourceExample]:
    """Original-side examples (base text, original value) from run records."""
    out = []
    for rec in records:
        out.append(
            SourceExample(
                product_id=rec["base_id"],
                attribute_key=rec["attribute_key"],
                value=rec["original_value"],
                fields=dict(rec["base_text_fields"]),
                source="original",
            )
        )
    return out


def synthetics_from_run(records: Iterable[Mapping]) -> list[SourceExample]:
    """Synthetic-side examples from rewrite-strategy records.

    Only the consistent-rewrite strategy yields a clean (text, value) pair;
    planted inconsistencies and removals are unusable as extraction truth.
    """
    out = []
    for rec in records:
        if rec.get("strategy") != "correct":
            continue
        out.append(
            SourceExample(
                product_id=rec["base_id"],
                attribute_key=rec["attribute_key"],
                value=rec["new_value"],
                fields=dict(rec["text_fields"]),
                source="synthetic",
            )
        )
    return out


@dataclass
class SplitSet:
    train: list[ExtractionExample] = field(default_factory=list)
    val: list[ExtractionExample] = field(default_factory=list)
    test: list[ExtractionExample] = field(default_factory=list)


def build_configs(
    originals: Sequence[SourceExample],
    synthetics: Sequence[SourceExample],
    seed: int,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    configs: Sequence[DatasetConfig] = DATASET_CONFIGS,
) -> dict[str, SplitSet]:
    """Assemble every training mixture from a shared paired pool.

    The pool is the set of product ids present on both sides; it splits
    80/20 into train/validation once, shared by every config.  Products
    with no synthetic twin form the held-out test set, identical across
    configs.  Per config, each pooled id contributes either its original
    or its synthetic example, drawn by a seeded coin to hit the mixture
    fractions exactly.
    """
    orig_by_id = {}
    for src in originals:
        orig_by_id.setdefault(src.product_id, src)
    synth_by_id = {}
    for src in synthetics:
        synth_by_id.setdefault(src.product_id, src)

    paired_ids = sorted(set(orig_by_id) & set(synth_by_id))
    test_ids = sorted(set(orig_by_id) - set(synth_by_id))
    if not paired_ids:
        raise ExtractionError("no products carry both an original and a synthetic example")

    shuffled = list(paired_ids)
    Random(seed).shuffle(shuffled)
    cut = int(len(shuffled) * TRAIN_FRACTION)
    train_ids, val_ids = shuffled[:cut], shuffled[cut:]

    test_examples = [example_from_source(orig_by_id[pid], token_budget) for pid in test_ids]

    out: dict[str, SplitSet] = {}
    for cfg in configs:
        splits = SplitSet(test=list(test_examples))
        if cfg.name != "zero_shot":
            rng = Random(f"{seed}:{cfg.name}")
            for ids, bucket in ((train_ids, splits.train), (val_ids, splits.val)):
                n_synth = round(cfg.synthetic_fraction * len(ids))
                order = list(ids)
                rng.shuffle(order)
                synth_ids = set(order[:n_synth])
                for pid in ids:
                    src = synth_by_id[pid] if pid in synth_ids else orig_by_id[pid]
                    bucket.append(example_from_source(src, token_budget))
        out[cfg.name] = splits
    return out


def emit_examples(config_sets: Mapping[str, SplitSet], out_dir: str | Path) -> dict:
    """Write train/val/test TSVs plus per-split source metadata per config."""
    root = Path(out_dir)
    summary: dict[str, dict] = {}
    for name, splits in config_sets.items():
        cfg_dir = root / name
        cfg_dir.mkdir(parents=True, exist_ok=True)
        counts = {}
        for split_name in ("train", "val", "test"):
            examples: list[ExtractionExample] = getattr(splits, split_name)
            with (cfg_dir / f"{split_name}.tsv").open("w", encoding="utf-8") as fh:
                for ex in examples:
                    fh.write(ex.to_line() + "\n")
            with (cfg_dir / f"{split_name}.meta.jsonl").open("w", encoding="utf-8") as fh:
                for ex in examples:
                    fh.write(
                        json.dumps(
                            {"product_id": ex.product_id, "source": ex.source},
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
            by_source = {"original": 0, "synthetic": 0}
            for ex in examples:
                by_source[ex.source] += 1
            counts[split_name] = {"total": len(examples), **by_source}
        summary[name] = counts
        (cfg_dir / "config.json").write_text(
            json.dumps({"name": name, "counts": counts}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return summary


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- value normalization and mismatch analysis ---------------------------------


def load_units(path: str | Path | None = None) -> tuple[str, ...]:
    lines = Path(path or UNITS_PATH).read_text(encoding="utf-8").splitlines()
    units = [ln.strip().lower() for ln in lines if ln.strip() and not ln.startswith("#")]
    return tuple(sorted(set(units), key=lambda u: (-len(u), u)))


@dataclass(frozen=True)
class NormalizeRules:
    lowercase: bool = True
    collapse_whitespace: bool = True
    strip_leading_for: bool = True
    strip_units: bool = True
    strip_plural: bool = True


def _basic_norm(value: str) -> str:
    return _WS_RE.sub(" ", value).strip().lower()


def _strip_plural_token(token: str) -> str:
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def _strip_plural(value: str) -> str:
    tokens = value.split()
    if not tokens:
        return value
    tokens[-1] = _strip_plural_token(tokens[-1])
    return " ".join(tokens)


def _strip_unit_suffix(value: str, units: Sequence[str]) -> str:
    for unit in units:
        if value.endswith(" " + unit):
            remainder = value[: -len(unit) - 1].rstrip()
            # Only treat the suffix as a unit after a numeric quantity;
            # "fruit count" is a value, "1200 thread count" is a quantity.
            if remainder and remainder[-1].isdigit():
                return remainder
    return value


def normalize_value(
    value: str,
    units: Sequence[str] | None = None,
    rules: NormalizeRules = NormalizeRules(),
) -> str:
    """Canonicalize an attribute value for tolerant comparison."""
    out = value
    if rules.lowercase:
        out = out.lower()
    if rules.collapse_whitespace:
        out = _WS_RE.sub(" ", out).strip()
    if rules.strip_leading_for and out.startswith("for "):
        out = out[4:].strip()
    if rules.strip_units:
        out = _strip_unit_suffix(out, units if units is not None else load_units())
    if rules.strip_plural:
        out = _strip_plural(out)
    return out


_PUNCT_RE = re.compile(r"[^\w\s]")


def categorize_mismatch(
    predicted: str,
    gold: str,
    units: Sequence[str] | None = None,
    embedder: Embedder | None = None,
    alternates: Mapping[str, Sequence[str]] | None = None,
) -> str:
    """Name the surface variation separating a prediction from its gold value.

    Rules apply in a fixed precedence; the first match wins and only pairs
    that fall through every rule are true errors.
    """
    units = units if units is not None else load_units()
    pred = _basic_norm(predicted)
    ref = _basic_norm(gold)
    if not pred or not ref:
        return "true_error"
    if pred == ref:
        return "format_variation"

    if _strip_plural(pred) == _strip_plural(ref):
        return "morphological"

    pred_nounit = _strip_unit_suffix(pred, units)
    ref_nounit = _strip_unit_suffix(ref, units)
    if (pred_nounit != pred or ref_nounit != ref) and pred_nounit == ref_nounit:
        return "missing_units"

    pred_tokens = pred.split()
    ref_tokens = ref.split()
    shorter, longer = sorted((pred_tokens, ref_tokens), key=len)
    if shorter and len(shorter) < len(longer):
        if longer[: len(shorter)] == shorter or longer[-len(shorter):] == shorter:
            return "granularity"

    def _format_strip(value: str) -> str:
        out = value[4:] if value.startswith("for ") else value
        out = _PUNCT_RE.sub(" ", out)
        return _WS_RE.sub(" ", out).strip()

    pred_fmt = _format_strip(pred)
    ref_fmt = _format_strip(ref)
    if pred_fmt == ref_fmt:
        return "format_variation"
    if (pred_fmt != pred or ref_fmt != ref) and set(pred_fmt.split()) & set(ref_fmt.split()):
        return "format_variation"

    embedder = embedder or TrigramEmbedder()
    similarity = cosine_similarity(embedder.embed_text(pred), embedder.embed_text(ref))
    if similarity >= SYNONYM_SIMILARITY:
        return "contextual_synonym"

    pred_set, ref_set = set(pred_tokens), set(ref_tokens)
    if pred_set and ref_set and (pred_set <= ref_set or ref_set <= pred_set):
        return "equivalent_definition"

    if alternates:
        accepted = {_basic_norm(a) for a in alternates.get(ref, ())} | {
            _basic_norm(a) for a in alternates.get(gold, ())
        }
        if pred in accepted:
            return "multiple_valid"

    return "true_error"


@dataclass(frozen=True)
class ScoreReport:
    total: int
    strict_correct: int
    normalized_correct: int
    strict_accuracy: float
    normalized_accuracy: float
    mismatch_counts: Mapping[str, int]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "strict_correct": self.strict_correct,
            "normalized_correct": self.normalized_correct,
            "strict_accuracy": self.strict_accuracy,
            "normalized_accuracy": self.normalized_accuracy,
            "mismatch_counts": dict(self.mismatch_counts),
        }


def score_predictions(
    predictions: Sequence[str],
    golds: Sequence[str],
    units: Sequence[str] | None = None,
    embedder: Embedder | None = None,
    alternates: Mapping[str, Sequence[str]] | None = None,
) -> ScoreReport:
    """Strict and normalized accuracy plus a mismatch-category breakdown.

    Strict compares trimmed strings; normalized compares canonical forms.
    Every strict mismatch gets a category, so normalized accuracy can never
    fall below strict accuracy.
    """
    if len(predictions) != len(golds):
        raise ExtractionError(
            f"got {len(predictions)} predictions for {len(golds)} gold values"
        )
    if not golds:
        raise ExtractionError("nothing to score")
    units = units if units is not None else load_units()
    strict = 0
    normalized = 0
    mismatches: dict[str, int] = {name: 0 for name in MISMATCH_CATEGORIES}
    for pred, gold in zip(predictions, golds):
        if pred.strip() == gold.strip():
            strict += 1
            normalized += 1
            continue
        if normalize_value(pred, units) == normalize_value(gold, units):
            normalized += 1
        category = categorize_mismatch(pred, gold, units, embedder, alternates)
        mismatches[category] += 1
    total = len(golds)
    return ScoreReport(
        total=total,
        strict_correct=strict,
        normalized_correct=normalized,
        strict_accuracy=strict / total,
        normalized_accuracy=normalized / total,
        mismatch_counts={k: v for k, v in mismatches.items() if v},
    )


def load_predictions(path: str | Path) -> list[str]:
    with Path(path).open("r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def load_gold_targets(path: str | Path) -> list[str]:
    """Targets from a TSV emitted by this module (last tab field per line)."""
    targets = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            targets.append(line.split("\t")[-1])
    return targets
