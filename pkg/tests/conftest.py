from __future__ import annotations

import json
from pathlib import Path

import pytest

from promptforge.catalog import CatalogRoots, canonical_json, load_roots

REPO_ROOT = Path(__file__).resolve().parent.parent
CATALOG_ROOT = REPO_ROOT / "catalog"
FIXTURES = Path(__file__).resolve().parent / "fixtures"

STSB_RECIPE = (
    "card=cards.stsb,template=templates.text_similarity,"
    "sys_prompt=prompts.helpful,format=formats.user_agent,num_demos=1"
)

GOLDEN_PROMPT = (
    "[System] you are helpful model [/System]\n"
    "[User]: for the following texts rank the similarity between 1 to 5.\n"
    '        Text 1: "i love ice cream"\n'
    '        Text 2: "i like ice cream"\n'
    "[Agent]: 4.8\n"
    '[User]: Text 1: "i hate pizza"\n'
    '        Text 2: "i like pizza"\n'
    "[Agent]:"
)


@pytest.fixture(scope="session")
def catalog_path() -> Path:
    return CATALOG_ROOT


@pytest.fixture(scope="session")
def roots() -> CatalogRoots:
    return load_roots([CATALOG_ROOT])


@pytest.fixture()
def write_catalog(tmp_path):
    """Factory: build a throwaway catalog root from {relpath: body} mappings.

    String bodies are written verbatim (for malformed-file tests); dict bodies
    are canonicalized.
    """

    def build(files: dict[str, dict | str], name: str = "root") -> Path:
        root = tmp_path / name
        for rel, body in files.items():
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            if isinstance(body, str):
                path.write_text(body, encoding="utf-8")
            else:
                path.write_text(canonical_json(body), encoding="utf-8")
        root.mkdir(exist_ok=True)
        return root

    return build


@pytest.fixture()
def jsonl_writer(tmp_path):
    def write(name: str, rows: list[dict]) -> Path:
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        return path

    return write
