"""Command-line interface.

Exit codes: 0 success, 2 usage error (argparse), 3 missing or unreadable
input, 4 invalid configuration or validation failure, 5 every task in a
batch failed, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from synthcat import annotation, extraction, fixtures, metrics
from synthcat.catalog import (
    IngestError,
    SamplingError,
    compute_catalog_stats,
    ingest_catalog,
    sample_generation_tasks,
)
from synthcat.config import ConfigError, load_config_file, merge_config
from synthcat.gateway import LLMGateway, RemoteProvider, RetryPolicy, UsageLedger
from synthcat.generator import GenerationContext, GeneratorConfig, run_batch
from synthcat.mock_provider import MockProvider
from synthcat.prompts import PromptError, PromptTemplates, StoreConstraints
from synthcat.strategies import ProbabilityError, StrategyProbabilities, validate_probabilities
from synthcat.values import (
    RemoteEmbedder,
    TrigramEmbedder,
    ValueProvider,
    ValueProviderConfig,
    load_metadata,
)

EXIT_OK = 0
EXIT_INPUT = 3
EXIT_CONFIG = 4
EXIT_ALL_FAILED = 5


class AllTasksFailed(Exception):
    pass


def _add_config_flag(parser: argparse.ArgumentParser):
    parser.add_argument("--config", metavar="PATH", help="JSON config file with dotted keys")


def _load_cfg(args, overrides: dict | None = None) -> dict:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else None
    return merge_config(file_values, overrides)


def _print_json(payload, stream=None):
    # Resolve stdout lazily so redirection after import is honored.
    stream = stream if stream is not None else sys.stdout
    json.dump(payload, stream, indent=2, ensure_ascii=False, sort_keys=True)
    stream.write("\n")


def _read_run_records(path: str | Path) -> list[dict]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        raise IngestError(f"no records in {path}")
    return records


def _build_context(cfg: dict, args) -> tuple[GenerationContext, StrategyProbabilities]:
    pi = StrategyProbabilities(
        pi_correct=float(cfg["strategy.pi_correct"]),
        pi_incorrect=float(cfg["strategy.pi_incorrect"]),
        pi_unknown=float(cfg["strategy.pi_unknown"]),
    )
    if getattr(args, "pi", None):
        pi = StrategyProbabilities.parse(args.pi)
    validate_probabilities(pi)

    if cfg["llm.mode"] == "mock":
        provider = MockProvider()
    elif cfg["llm.mode"] == "remote":
        if not cfg["llm.endpoint"] or not cfg["llm.model"]:
            raise ConfigError("remote mode needs llm.endpoint and llm.model")
        provider = RemoteProvider(
            endpoint=str(cfg["llm.endpoint"]),
            model=str(cfg["llm.model"]),
            timeout=float(cfg["llm.timeout"]),
        )
    else:
        raise ConfigError(f"unknown llm.mode {cfg['llm.mode']!r}")

    gateway = LLMGateway(
        provider,
        retry=RetryPolicy(retries=int(cfg["llm.retries"])),
        max_parallel=int(cfg["llm.max_parallel"]),
        ledger=UsageLedger(),
    )

    if cfg["similarity.backend"] == "fallback":
        embedder = TrigramEmbedder()
    elif cfg["similarity.backend"] == "remote":
        if not cfg["similarity.endpoint"]:
            raise ConfigError("remote similarity backend needs similarity.endpoint")
        embedder = RemoteEmbedder(str(cfg["similarity.endpoint"]))
    else:
        raise ConfigError(f"unknown similarity.backend {cfg['similarity.backend']!r}")

    metadata_spec = getattr(args, "metadata", None) or str(cfg["attributes.metadata"])
    if metadata_spec == "fixture":
        metadata = fixtures.build_fixture_metadata()
    elif metadata_spec:
        metadata = load_metadata(metadata_spec)
    else:
        metadata = {}

    value_provider = ValueProvider(
        gateway,
        config=ValueProviderConfig(
            temperature=float(cfg["value_provider.temperature"]),
            pool_size=int(cfg["value_provider.pool_size"]),
            max_retries=int(cfg["value_provider.max_retries"]),
            similarity_ceiling=float(cfg["similarity.s_max"]),
        ),
        embedder=embedder,
        metadata=metadata,
    )

    locale = getattr(args, "locale", None) or str(cfg["prompts.locale"])
    templates = PromptTemplates(locale, str(cfg["prompts.dir"]) or None)
    constraints = StoreConstraints(
        locale_id=locale,
        unit_system=str(cfg["store.unit_system"]),
        currency_symbol=str(cfg["store.currency_symbol"]),
        language_tag=str(cfg["store.language_tag"]),
    )

    category_attributes = {}
    if cfg["generator.category_attributes"]:
        category_attributes = json.loads(
            Path(str(cfg["generator.category_attributes"])).read_text(encoding="utf-8")
        )
    brand_lexicon = tuple(
        b.strip() for b in str(cfg["generator.brand_lexicon"]).split(",") if b.strip()
    )

    ctx = GenerationContext(
        gateway=gateway,
        value_provider=value_provider,
        templates=templates,
        constraints=constraints,
        config=GeneratorConfig(
            temperature=float(cfg["generator.temperature"]),
            max_output_tokens=int(cfg["generator.max_output_tokens"]),
            parse_retries=int(cfg["generator.parse_retries"]),
            acceptable_change_ratio=float(cfg["generator.acceptable_change_ratio"]),
        ),
        category_attributes=category_attributes,
        brand_lexicon=brand_lexicon,
        max_parallel=int(cfg["llm.max_parallel"]),
    )
    return ctx, pi


# -- subcommands ----------------------------------------------------------------


def cmd_ingest(args) -> int:
    catalog = ingest_catalog(args.input, max_products=args.max_products)
    catalog.save(args.output)
    print(f"ingested {len(catalog)} products ({len(catalog.skipped)} lines skipped)")
    for line_no, reason in catalog.skipped[:10]:
        print(f"  line {line_no}: {reason}", file=sys.stderr)
    return EXIT_OK


def cmd_stats(args) -> int:
    catalog = ingest_catalog(args.input)
    if not catalog.products:
        raise IngestError("catalog is empty after ingestion")
    stats = compute_catalog_stats(catalog)
    if args.format == "json":
        _print_json(
            {
                "product_count": stats.product_count,
                "category_histogram": stats.category_histogram,
                "attribute_histogram": stats.attribute_histogram,
                "attrs_per_product": {
                    "mean": stats.attrs_per_product[0],
                    "std": stats.attrs_per_product[1],
                },
                "evidence_spans_per_attr": {
                    "mean": stats.evidence_spans_per_attr[0],
                    "std": stats.evidence_spans_per_attr[1],
                },
                "paragraphs_per_product": {
                    "mean": stats.paragraphs_per_product[0],
                    "std": stats.paragraphs_per_product[1],
                },
                "evidence_source_distribution": stats.evidence_source_distribution,
            }
        )
        return EXIT_OK
    print(f"products: {stats.product_count}")
    print(
        "attributes/product: "
        f"{stats.attrs_per_product[0]:.2f} ± {stats.attrs_per_product[1]:.2f}"
    )
    print(
        "evidence spans/attribute: "
        f"{stats.evidence_spans_per_attr[0]:.2f} ± {stats.evidence_spans_per_attr[1]:.2f}"
    )
    print(
        "paragraphs/product: "
        f"{stats.paragraphs_per_product[0]:.2f} ± {stats.paragraphs_per_product[1]:.2f}"
    )
    print("categories:")
    for name, count in sorted(stats.category_histogram.items(), key=lambda x: (-x[1], x[0])):
        print(f"  {name}: {count}")
    if stats.evidence_source_distribution:
        print("evidence sources:")
        for name, frac in stats.evidence_source_distribution.items():
            print(f"  {name}: {100 * frac:.1f}%")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    ctx, pi = _build_context(cfg, args)
    if args.fixture:
        catalog = fixtures.build_fixture_catalog(args.fixture)
    else:
        if not args.input:
            raise ConfigError("generate needs --input or --fixture")
        catalog = ingest_catalog(args.input)
    pairs = sample_generation_tasks(catalog, args.top_k, args.n, args.seed)
    result = run_batch(
        pairs,
        ctx,
        pi,
        run_seed=args.seed,
        out_dir=args.out_dir,
        config_snapshot=cfg,
    )
    manifest = result.manifest
    print(
        f"generated {manifest['success_count']}/{manifest['task_count']} products "
        f"(failures: {manifest['failure_count']}) -> {args.out_dir}"
    )
    for label, count in sorted(manifest["strategy_counts"].items()):
        print(f"  {label}: {count}")
    if manifest["task_count"] and not manifest["success_count"]:
        raise AllTasksFailed("every generation task failed; see manifest failures")
    return EXIT_OK


def cmd_metrics(args) -> int:
    records = _read_run_records(args.run)
    pairs = [(r["base_text_fields"], r["text_fields"]) for r in records]
    rows = metrics.compute_field_metrics(pairs)
    if args.format == "json":
        _print_json(
            {
                row.field: {
                    "ttr_original": row.ttr_original,
                    "ttr_synthetic": row.ttr_synthetic,
                    "kl_divergence": row.kl_divergence,
                    "cosine": row.cosine,
                }
                for row in rows
            }
        )
        return EXIT_OK
    print(f"{'field':<12} {'TTR orig':>9} {'TTR synth':>9} {'KL':>8} {'cosine':>8}")
    for row in rows:
        print(
            f"{row.field:<12} {row.ttr_original:>9.2f} {row.ttr_synthetic:>9.2f} "
            f"{row.kl_divergence:>8.2f} {row.cosine:>8.2f}"
        )
    return EXIT_OK


def cmd_cost(args) -> int:
    cfg = _load_cfg(args)
    model = metrics.CostModel(
        price_per_m_input=float(cfg["pricing.input_per_million"]),
        price_per_m_output=float(cfg["pricing.output_per_million"]),
    )
    per_product = model.per_product_cost()
    total = model.batch_cost(args.n)
    if args.format == "json":
        _print_json({"n_products": args.n, "per_product": per_product, "total": total})
        return EXIT_OK
    print(f"per product: ${per_product:.6f}")
    print(f"total for {args.n}: ${total:.2f}")
    return EXIT_OK


def cmd_export_annotation(args) -> int:
    records = _read_run_records(args.run)
    tasks = annotation.export_tasks(records, args.out_dir)
    print(f"exported {len(tasks)} annotation tasks -> {args.out_dir}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    tasks = annotation.load_tasks(args.tasks)
    store = annotation.LabelStore(tasks, args.log)
    app = annotation.create_app(store, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_report(args) -> int:
    tasks = annotation.load_tasks(args.tasks)
    store = annotation.LabelStore(tasks, args.log)
    try:
        report = annotation.build_report(store.tasks, store.all_labels(), store.protocol)
    finally:
        store.close()
    if args.format == "json":
        _print_json(report)
        return EXIT_OK
    print(f"tasks: {report['total_tasks']} (fully labeled: {report['fully_labeled']})")
    for qid, entry in report["questions"].items():
        if "rate_valid" in entry:
            print(f"  {qid}: {entry['rate_valid']}% valid (n={entry['denominator']})")
        else:
            rates = ", ".join(f"{opt} {pct}%" for opt, pct in entry["rates"].items())
            print(f"  {qid}: {rates}")
    if report["consistency_by_strategy"]:
        print("consistency by strategy:")
        for strategy, pct in report["consistency_by_strategy"].items():
            print(f"  {strategy}: {pct}%")
    return EXIT_OK


def cmd_prepare_extraction(args) -> int:
    cfg = _load_cfg(args)
    records = _read_run_records(args.run)
    originals = extraction.originals_from_run(records)
    synthetics = extraction.synthetics_from_run(records)
    config_sets = extraction.build_configs(
        originals,
        synthetics,
        seed=args.seed,
        token_budget=int(cfg["extraction.token_budget"]),
    )
    summary = extraction.emit_examples(config_sets, args.out_dir)
    print(f"prepared {len(summary)} dataset configurations -> {args.out_dir}")
    for name, counts in summary.items():
        train, val, test = counts["train"], counts["val"], counts["test"]
        print(
            f"  {name}: train {train['total']} "
            f"(orig {train['original']}/synth {train['synthetic']}), "
            f"val {val['total']}, test {test['total']}"
        )
    return EXIT_OK


def cmd_score(args) -> int:
    predictions = extraction.load_predictions(args.pred)
    golds = extraction.load_gold_targets(args.gold)
    alternates = None
    if args.alternates:
        alternates = json.loads(Path(args.alternates).read_text(encoding="utf-8"))
    report = extraction.score_predictions(predictions, golds, alternates=alternates)
    if args.format == "json":
        _print_json(report.to_dict())
        return EXIT_OK
    print(f"examples: {report.total}")
    print(f"strict accuracy: {report.strict_accuracy:.4f} ({report.strict_correct})")
    print(f"normalized accuracy: {report.normalized_accuracy:.4f} ({report.normalized_correct})")
    if report.mismatch_counts:
        print("mismatch categories:")
        for name, count in sorted(report.mismatch_counts.items(), key=lambda x: (-x[1], x[0])):
            print(f"  {name}: {count}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthcat",
        description="Synthetic product listing generation and evaluation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="consolidate a raw catalog into the canonical layout")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--max-products", type=int, default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="descriptive statistics for a catalog file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("generate", help="run a synthetic generation batch")
    p.add_argument("--input", help="catalog JSONL (omit when using --fixture)")
    p.add_argument("--fixture", type=int, metavar="N", help="use N built-in demo products")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, required=True, help="number of products to sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-k", type=int, default=10, help="restrict to the K largest categories")
    p.add_argument("--pi", help="strategy probabilities as 'correct,incorrect,unknown'")
    p.add_argument("--locale", help="prompt template locale")
    p.add_argument(
        "--metadata",
        help="attribute metadata JSON path, or 'fixture' for the built-in registry",
    )
    _add_config_flag(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("metrics", help="quality metrics for a generation run")
    p.add_argument("--run", required=True, help="synthetic.jsonl from a generation run")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("cost", help="estimate generation cost for a batch")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--format", choices=("table", "json"), default="table")
    _add_config_flag(p)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("export-annotation", help="export annotation tasks from a run")
    p.add_argument("--run", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_export_annotation)

    p = sub.add_parser("serve", help="serve the annotation API and UI")
    p.add_argument("--tasks", required=True, help="tasks.jsonl from export-annotation")
    p.add_argument("--log", required=True, help="append-only label log path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.add_argument("--ui", help="directory with the annotation UI static build")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="aggregate labels into a quality report")
    p.add_argument("--tasks", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("prepare-extraction", help="build extraction fine-tuning datasets")
    p.add_argument("--run", required=True, help="synthetic.jsonl from a generation run")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_config_flag(p)
    p.set_defaults(func=cmd_prepare_extraction)

    p = sub.add_parser("score", help="score extraction predictions against a gold TSV")
    p.add_argument("--pred", required=True, help="one prediction per line")
    p.add_argument("--gold", required=True, help="gold TSV (input<TAB>target)")
    p.add_argument("--alternates", help="JSON mapping gold value -> accepted alternates")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_score)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AllTasksFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    except (ConfigError, ProbabilityError, PromptError, SamplingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
