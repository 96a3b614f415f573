"""Declarative preparation and evaluation of text datasets for language models.

Recipes name catalog artifacts (cards, templates, formats, prompts,
augmentors); the pipeline binds them into reproducible prompt streams, and the
evaluator maps raw model output back into typed scores with bootstrap CIs.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .catalog import ArtifactId, CatalogRoots, load_roots, roots_from_env
from .errors import PromptForgeError
from .evaluate import BootstrapConfig, EvaluationReport, evaluate
from .pipeline import (
    PreparedDataset,
    PreparedInstance,
    export_jsonl,
    import_jsonl,
    prepare,
    prepare_text,
)
from .recipe import Recipe, RecipeSpec, parse_recipe, render_recipe, resolve_recipe

__all__ = [
    "ArtifactId",
    "BootstrapConfig",
    "CatalogRoots",
    "EvaluationReport",
    "PreparedDataset",
    "PreparedInstance",
    "PromptForgeError",
    "Recipe",
    "RecipeSpec",
    "__version__",
    "evaluate",
    "export_jsonl",
    "import_jsonl",
    "load_roots",
    "parse_recipe",
    "prepare",
    "prepare_text",
    "render_recipe",
    "resolve_recipe",
    "roots_from_env",
]
