"""The JSON Schemas in schemas/ must accept every shipped artifact and the
prepared JSONL rows, and reject the malformed shapes the engine rejects."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from jsonschema import Draft202012Validator

from promptforge.pipeline import prepare_text
from tests.conftest import CATALOG_ROOT, FIXTURES, REPO_ROOT, STSB_RECIPE

SCHEMA_DIR = REPO_ROOT / "schemas"

KIND_BY_NAMESPACE = {
    "cards": "card",
    "tasks": "task",
    "templates": "template",
    "formats": "format",
    "prompts": "system_prompt",
    "augmentors": "augmentor",
    "metrics": "metric",
    "recipes": "recipe",
    "processors": "processor",
}


def load_schema(name: str) -> Draft202012Validator:
    schema = json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text(encoding="utf-8"))
    Draft202012Validator.check_schema(schema)
    return Draft202012Validator(schema)


def artifact_files(root: Path) -> list[tuple[str, Path]]:
    out = []
    for path in sorted(root.rglob("*.json")):
        namespace = path.relative_to(root).parts[0]
        if namespace in KIND_BY_NAMESPACE:
            out.append((KIND_BY_NAMESPACE[namespace], path))
    return out


ALL_ARTIFACTS = artifact_files(CATALOG_ROOT) + artifact_files(FIXTURES / "private_root")


def test_every_schema_file_is_itself_valid():
    names = sorted(p.stem.removesuffix(".schema") for p in SCHEMA_DIR.glob("*.schema.json"))
    assert names == [
        "augmentor", "card", "format", "metric", "prepared_instance",
        "processor", "recipe", "system_prompt", "task", "template",
    ]
    for name in names:
        load_schema(name)


@pytest.mark.parametrize(
    "kind,path", ALL_ARTIFACTS, ids=[str(p.relative_to(REPO_ROOT)) for _, p in ALL_ARTIFACTS]
)
def test_shipped_artifacts_validate(kind: str, path: Path):
    validator = load_schema(kind)
    body = json.loads(path.read_text(encoding="utf-8"))
    errors = list(validator.iter_errors(body))
    assert not errors, "\n".join(e.message for e in errors)


def test_prepared_jsonl_rows_validate(roots, tmp_path):
    validator = load_schema("prepared_instance")
    prepared = prepare_text(STSB_RECIPE, roots)
    rows = [inst.to_json_dict() for inst in prepared.all_instances()]
    assert rows
    for row in rows:
        # round trip through JSON text, as a reader of the exported file sees it
        errors = list(validator.iter_errors(json.loads(json.dumps(row))))
        assert not errors, "\n".join(e.message for e in errors)


BAD_BODIES = [
    ("task", {"type": "task", "input_fields": {"a": "text"}, "output_fields": {"b": "matrix"},
              "metrics": ["metrics.accuracy"]}),
    ("task", {"type": "task", "input_fields": {"a": "text"}, "output_fields": {"b": "text"},
              "metrics": []}),
    ("card", {"type": "card", "loader": {"type": "http"}, "task": "tasks.sentiment"}),
    ("card", {"type": "card", "task": "tasks.sentiment",
              "loader": {"type": "local_jsonl", "split_files": {"dev": "x.jsonl"}}}),
    ("card", {"type": "card", "task": "tasks.sentiment",
              "loader": {"type": "local_jsonl", "split_files": {"train": "x.jsonl"}},
              "preprocess_ops": [{"type": "limit"}]}),
    ("template", {"type": "template"}),
    ("template", {"type": "template", "input_format": "{x}", "extra_key": 1}),
    ("processor", {"type": "processor", "kind": "uppercase"}),
    ("processor", {"type": "processor", "kind": "to_real", "separator": ";"}),
    ("format", {"type": "format", "layout": "{demos}x", "demo_layout": "{source} {target}"}),
    ("format", {"type": "format", "layout": "{source}", "demo_layout": "{source}"}),
    ("format", {"type": "format", "layout": "{source}", "demo_layout": "{source} {target}",
                "system_prompt_wrapper": ["only-open"]}),
    ("system_prompt", {"type": "system_prompt"}),
    ("augmentor", {"type": "augmentor", "kind": "whitespace_noise", "target": "pre_template",
                   "probability": 1.5}),
    ("augmentor", {"type": "augmentor", "kind": "demo_label_noise", "target": "pre_template",
                   "probability": 0.2}),
    ("augmentor", {"type": "augmentor", "kind": "whitespace_noise", "target": "post_template",
                   "probability": 0.1, "ops": ["swap"]}),
    ("metric", {"type": "metric", "metric": "bleu"}),
    ("recipe", {"type": "recipe", "card": "cards.stsb", "format": "formats.plain"}),
    ("recipe", {"type": "recipe", "card": "cards.stsb", "format": "formats.plain",
                "template": "templates.text_similarity", "template_card_index": 0}),
    ("recipe", {"type": "recipe", "card": "cards.stsb", "format": "formats.plain",
                "template": "templates.text_similarity", "num_demos": -1}),
]


@pytest.mark.parametrize("kind,body", BAD_BODIES, ids=range(len(BAD_BODIES)))
def test_malformed_bodies_are_rejected(kind: str, body: dict):
    validator = load_schema(kind)
    assert not validator.is_valid(body), f"{kind} schema accepted a malformed body: {body}"


def test_prepared_row_missing_field_rejected(roots):
    validator = load_schema("prepared_instance")
    prepared = prepare_text(STSB_RECIPE, roots)
    row = prepared.instances["test"][0].to_json_dict()
    del row["target"]
    assert not validator.is_valid(row)
    row2 = prepared.instances["test"][0].to_json_dict()
    row2["split"] = "dev"
    assert not validator.is_valid(row2)
