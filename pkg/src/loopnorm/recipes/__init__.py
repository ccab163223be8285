"""Transformation engine and fingerprint-keyed recipe database."""

from .database import (DatabaseFormatError, DuplicateKey, Recipe, RecipeDatabase, apply,
                       apply_database, default_recipe)
from .emit import emit_c
from .idioms import IDIOMS, detect_idiom, idiom_args
from .transforms import (FuseProducerConsumer, IllegalStep, Interchange, KeyMismatch,
                         MarkParallel, MarkVectorize, ReplaceIdiom, Tile, Transform, apply_step,
                         apply_steps, fuse_producer_consumer, fusion_refusal, tile)

__all__ = [
    "Recipe", "RecipeDatabase", "DuplicateKey", "DatabaseFormatError", "apply", "apply_database",
    "default_recipe", "emit_c", "IDIOMS", "detect_idiom", "idiom_args", "FuseProducerConsumer",
    "IllegalStep", "Interchange", "KeyMismatch", "MarkParallel", "MarkVectorize", "ReplaceIdiom",
    "Tile", "Transform", "apply_step", "apply_steps", "fuse_producer_consumer", "fusion_refusal",
    "tile",
]
