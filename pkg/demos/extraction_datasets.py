"""
Building extraction datasets from a run
=======================================

Synthetic rewrites are only useful if they train a better extractor, so
the package ships a harness that assembles train/val/test mixtures and
scores predictions with mismatch categories instead of a single number.
"""

import tempfile
from pathlib import Path
from random import Random

from synthcat.catalog import sample_generation_tasks
from synthcat.extraction import (
    build_configs,
    emit_examples,
    file_digest,
    originals_from_run,
    score_predictions,
    synthetics_from_run,
)
from synthcat.fixtures import build_fixture_catalog, build_fixture_metadata
from synthcat.gateway import LLMGateway, UsageLedger
from synthcat.generator import GenerationContext, run_batch
from synthcat.mock_provider import MockProvider
from synthcat.prompts import PromptTemplates
from synthcat.strategies import StrategyProbabilities
from synthcat.values import ValueProvider

# Generate a run to harvest.  Only consistent rewrites become synthetic
# training examples; conflict and removal records stay evaluation-side.
catalog = build_fixture_catalog(200)
pairs = sample_generation_tasks(catalog, 5, 150, seed=5)
gateway = LLMGateway(MockProvider(), ledger=UsageLedger())
ctx = GenerationContext(
    gateway=gateway,
    value_provider=ValueProvider(gateway, metadata=build_fixture_metadata()),
    templates=PromptTemplates(),
)
result = run_batch(pairs, ctx, StrategyProbabilities(), run_seed=5)
records = [p.to_record() for p in result.products]

originals = originals_from_run(records)
synthetics = synthetics_from_run(records)
print(f"{len(originals)} original examples, {len(synthetics)} synthetic twins")

# Six mixtures share one 80/20 split of the paired ids, so a 50/50 train
# set differs from the all-original one only in which twin each id uses.
config_sets = build_configs(originals, synthetics, seed=5)
for name, splits in sorted(config_sets.items()):
    synth = sum(1 for ex in splits.train if ex.source == "synthetic")
    print(f"  {name}: train={len(splits.train)} (synthetic {synth}) "
          f"val={len(splits.val)} test={len(splits.test)}")

out_dir = Path(tempfile.mkdtemp(prefix="synthcat-datasets-"))
emit_examples(config_sets, out_dir)

# Every configuration evaluates on the same held-out originals.  Identical
# digests make that checkable at a glance.
digests = {file_digest(out_dir / name / "test.tsv") for name in config_sets}
print(f"distinct test.tsv digests: {len(digests)}")

# Score a deliberately noisy prediction file.  Strict accuracy wants the
# exact string; normalized accuracy forgives case, units, and plurals, and
# every residual mismatch lands in a category.
golds = [ex.target for ex in config_sets["zero_shot"].test]
rng = Random(5)
predictions = []
for gold in golds:
    roll = rng.random()
    if roll < 0.6:
        predictions.append(gold)
    elif roll < 0.8:
        predictions.append(gold.upper() + " ")
    else:
        predictions.append("mystery value")
report = score_predictions(predictions, golds)
print(f"\nstrict {report.strict_accuracy:.3f} vs normalized {report.normalized_accuracy:.3f}")
for category, count in sorted(report.mismatch_counts.items()):
    print(f"  {category}: {count}")
print(f"datasets in {out_dir}")
