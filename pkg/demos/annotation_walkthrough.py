"""
Quality review without a browser
================================

The annotation service is a plain HTTP API over a label store, but the
store works fine headless too.  This script exports review tasks from a
generation run, plays three annotators, and prints the aggregate report.
"""

import tempfile
from pathlib import Path

from synthcat.annotation import LabelStore, build_report, export_tasks, load_tasks
from synthcat.catalog import sample_generation_tasks
from synthcat.fixtures import build_fixture_catalog, build_fixture_metadata
from synthcat.gateway import LLMGateway, UsageLedger
from synthcat.generator import GenerationContext, run_batch
from synthcat.mock_provider import MockProvider
from synthcat.prompts import PromptTemplates
from synthcat.strategies import StrategyProbabilities
from synthcat.values import ValueProvider

work = Path(tempfile.mkdtemp(prefix="synthcat-annotation-"))

# Step 1: produce something to review.
catalog = build_fixture_catalog(24)
pairs = sample_generation_tasks(catalog, 5, 12, seed=2)
gateway = LLMGateway(MockProvider(), ledger=UsageLedger())
ctx = GenerationContext(
    gateway=gateway,
    value_provider=ValueProvider(gateway, metadata=build_fixture_metadata()),
    templates=PromptTemplates(),
)
result = run_batch(pairs, ctx, StrategyProbabilities(), run_seed=2)

# Step 2: turn run records into annotation tasks (side-by-side text plus
# highlighted diff spans) and persist them next to the protocol definition.
records = [p.to_record() for p in result.products]
tasks = export_tasks(records, work)
print(f"exported {len(tasks)} tasks to {work}")

# Step 3: label everything.  The store hands each annotator the least
# covered open task and appends every accepted label to a replayable log.
store = LabelStore(load_tasks(work / "tasks.jsonl"), work / "labels.log")
base_answers = {
    "attribute_value_quality": "valid",
    "negative_example_coherence": "not_applicable",
    "cross_field_consistency": "valid",
    "brand_modification": "valid",
    "content_preservation": "none",
    "professional_writing": "valid",
}
for annotator in ("maria", "jules", "petra"):
    while True:
        task = store.next_task(annotator)
        if task is None:
            break
        answers = dict(base_answers)
        if task["strategy"] == "incorrect":
            # The coherence question only applies when a conflict was planted.
            answers["negative_example_coherence"] = "valid"
        store.submit(annotator, task["task_id"], answers)

progress = store.progress()
print(f"labels: {progress['labels']} across {progress['tasks']} tasks")

# Step 4: majority-vote aggregation.  Three annotators per task, majority
# of two decides; per-question rates fall out of the decided majorities.
report = build_report(store.tasks, store.all_labels())
store.close()

print(f"fully labeled: {report['fully_labeled']}/{report['total_tasks']}")
for qid, entry in report["questions"].items():
    if "rate_valid" in entry:
        print(f"  {qid}: {entry['rate_valid']}% valid (n={entry['applicable']})")
    else:
        print(f"  {qid}: {entry['rates']}")
print(f"consistency by strategy: {report['consistency_by_strategy']}")

# To run the same flow over HTTP with the bundled reviewer UI:
#   synthcat serve --tasks tasks.jsonl --log labels.log --ui frontend/dist
