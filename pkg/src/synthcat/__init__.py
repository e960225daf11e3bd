"""synthcat: synthetic e-commerce product data generation and evaluation.

The package is organized as a library; the ``synthcat`` console script (see
``synthcat.cli``) wires the pieces into subcommands, and ``demos/`` in the
repository root holds narrative scripts exercising each capability.
"""

from synthcat.catalog import (
    AttributeRecord,
    Catalog,
    CatalogStats,
    Product,
    compute_catalog_stats,
    compute_evidence_distribution,
    ingest_catalog,
    sample_generation_tasks,
)
from synthcat.strategies import StrategyLabel, StrategyProbabilities, sample_strategy

__version__ = "0.1.0"

__all__ = [
    "AttributeRecord",
    "Catalog",
    "CatalogStats",
    "Product",
    "StrategyLabel",
    "StrategyProbabilities",
    "compute_catalog_stats",
    "compute_evidence_distribution",
    "ingest_catalog",
    "sample_generation_tasks",
    "sample_strategy",
    "__version__",
]
