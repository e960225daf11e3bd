"""
Reference fine-tuning recipe
============================

The emitted TSVs are shaped for a text-to-text extractor: the input line
carries the attribute key and the flattened listing, the target is the
bare value.  Training itself is out of scope for this package (it needs a
GPU stack), but the recipe the datasets were designed around is small
enough to document as data.  Point any seq2seq trainer at a config dir
produced by ``synthcat prepare-extraction`` and apply these settings.
"""

import json
import sys
import tempfile
from pathlib import Path

# Optimization: AdamW with a flat learning rate, early stopping on
# validation accuracy rather than loss, since exact-match is the metric
# that matters downstream.
TRAINING = {
    "optimizer": "adamw",
    "learning_rate": 5e-5,
    "max_epochs": 12,
    "early_stopping": {"monitor": "val_accuracy", "patience": 2},
    "batch_size": 32,
}

# Decoding: beam search over a short window.  Attribute values are a few
# tokens long, so a tight max_length keeps the model from rambling, while
# the sampling caps keep beams diverse.
DECODING = {
    "num_beams": 5,
    "temperature": 0.7,
    "top_k": 50,
    "top_p": 0.95,
    "max_length": 20,
}


def write_recipe(dataset_dir: Path, out_path: Path) -> dict:
    """Bundle the recipe with the dataset paths a trainer needs."""
    recipe = {
        "train_file": str(dataset_dir / "train.tsv"),
        "validation_file": str(dataset_dir / "val.tsv"),
        "test_file": str(dataset_dir / "test.tsv"),
        "source_target_delimiter": "\t",
        "training": TRAINING,
        "decoding": DECODING,
    }
    out_path.write_text(json.dumps(recipe, indent=2) + "\n", encoding="utf-8")
    return recipe


if __name__ == "__main__":
    # Default to a scratch dir so the script runs standalone; pass a real
    # config dir (for example datasets/hybrid_50_50) as the first argument.
    dataset_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
    out_path = dataset_dir / "finetune_config.json"
    recipe = write_recipe(dataset_dir, out_path)
    print(json.dumps(recipe, indent=2))
    print(f"\nwrote {out_path}")

    # A typical consumer looks like this (requires transformers + torch):
    #
    #   model = AutoModelForSeq2SeqLM.from_pretrained("t5-base")
    #   ... load train/val TSVs, tokenize "input -> target" pairs ...
    #   trainer = Seq2SeqTrainer(model, args_from(recipe["training"]), ...)
    #   trainer.train()
    #   model.generate(**inputs, **recipe["decoding"])
