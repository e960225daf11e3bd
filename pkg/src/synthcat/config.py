"""Flat key-value run configuration.

Config files are JSON objects with dotted keys ("llm.mode": "mock").
Precedence: command-line flags override file values override defaults.
Unknown keys fail fast so typos never silently fall back to a default.
Credentials never live in config files; the API key comes from the
LLM_API_KEY environment variable.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping


class ConfigError(Exception):
    pass


DEFAULTS: dict[str, object] = {
    "strategy.pi_correct": 0.5,
    "strategy.pi_incorrect": 0.25,
    "strategy.pi_unknown": 0.25,
    "llm.mode": "mock",  # mock | remote
    "llm.endpoint": "",
    "llm.model": "",
    "llm.timeout": 30.0,
    "llm.retries": 3,
    "llm.max_parallel": 4,
    "value_provider.temperature": 1.0,
    "value_provider.pool_size": 8,
    "value_provider.max_retries": 3,
    "similarity.backend": "fallback",  # fallback | remote
    "similarity.endpoint": "",
    "similarity.s_max": 0.80,
    "prompts.dir": "",
    "prompts.locale": "en-US",
    "store.unit_system": "imperial",
    "store.currency_symbol": "$",
    "store.language_tag": "en",
    "generator.temperature": 0.3,
    "generator.max_output_tokens": 1024,
    "generator.parse_retries": 2,
    "generator.acceptable_change_ratio": 0.10,
    "generator.brand_lexicon": "",
    "generator.category_attributes": "",
    "attributes.metadata": "",
    "pricing.input_per_million": 0.80,
    "pricing.output_per_million": 4.00,
    "extraction.token_budget": 512,
}


def load_config_file(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    for key in raw:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
    return raw


def merge_config(
    file_values: Mapping | None = None,
    overrides: Mapping | None = None,
) -> dict:
    """defaults <- file <- explicit overrides; validates keys and types."""
    cfg = dict(DEFAULTS)
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            if value is None:
                continue
            default = DEFAULTS[key]
            try:
                if isinstance(default, bool):
                    cfg[key] = bool(value)
                elif isinstance(default, int) and not isinstance(default, bool):
                    cfg[key] = int(value)
                elif isinstance(default, float):
                    cfg[key] = float(value)
                else:
                    cfg[key] = str(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
    return cfg


def config_hash(cfg: Mapping) -> str:
    return hashlib.sha256(
        json.dumps(dict(cfg), sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()
