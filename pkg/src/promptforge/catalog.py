"""Artifact catalog: load, resolve, and list typed artifacts from directory roots.

A catalog root is a directory tree of JSON artifact files. The dotted artifact
id maps onto the file path: ``cards.stsb`` lives at ``cards/stsb.json`` and
``templates.classification.multi_label.default`` at
``templates/classification/multi_label/default.json``. The first id segment
names the artifact kind namespace; directories outside the known namespaces
(for example a ``data/`` folder holding raw files referenced by cards) are
ignored by the scan.

Multiple roots layer: the last root registered has the highest precedence, so
a private root can shadow individual entries of an open base catalog.
"""

from __future__ import annotations

import difflib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ArtifactNotFoundError,
    ArtifactParseError,
    DuplicateArtifactError,
    KindMismatchError,
    ReferenceCycleError,
    RootNotFoundError,
)

ENV_CATALOGS = "PROMPTFORGE_CATALOGS"

# namespace (first id segment, also the directory name) -> kind
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
NAMESPACE_BY_KIND = {kind: ns for ns, kind in KIND_BY_NAMESPACE.items()}

_SEGMENT_RE = re.compile(r"^[a-z0-9_]+$")

# Body keys whose string values are followed as artifact references during
# resolution, per kind. Every kind additionally honors a generic "ref" key.
_REFERENCE_SLOTS: dict[str, dict[str, str | None]] = {
    "card": {"task": "task", "templates": "template"},
    "task": {"metrics": "metric"},
    "template": {"postprocessors": "processor"},
    "recipe": {
        "card": "card",
        "template": "template",
        "format": "format",
        "system_prompt": "system_prompt",
        "augmentors": "augmentor",
    },
}


@dataclass(frozen=True)
class ArtifactId:
    """A dotted artifact identifier, e.g. ``cards.stsb``."""

    segments: tuple[str, ...]

    def __post_init__(self):
        if len(self.segments) < 2:
            raise ValueError(f"artifact id needs at least 2 segments: {'.'.join(self.segments)!r}")
        for seg in self.segments:
            if not _SEGMENT_RE.match(seg):
                raise ValueError(f"invalid id segment {seg!r} in {'.'.join(self.segments)!r}")
        if self.segments[0] not in KIND_BY_NAMESPACE:
            raise ValueError(
                f"unknown kind namespace {self.segments[0]!r}; expected one of "
                f"{', '.join(sorted(KIND_BY_NAMESPACE))}"
            )

    @classmethod
    def parse(cls, text: str) -> "ArtifactId":
        return cls(tuple(text.split(".")))

    @property
    def kind(self) -> str:
        return KIND_BY_NAMESPACE[self.segments[0]]

    def __str__(self) -> str:
        return ".".join(self.segments)


def is_artifact_id(text: str) -> bool:
    """True if text parses as a well-formed ArtifactId."""
    try:
        ArtifactId.parse(text)
        return True
    except ValueError:
        return False


def canonical_json(body: dict) -> str:
    """Canonical serialization: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(body, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass(frozen=True)
class Artifact:
    id: ArtifactId
    kind: str
    body: dict
    source_root: Path

    def canonical(self) -> str:
        return canonical_json(self.body)


def _scan_root(root: Path) -> dict[str, Artifact]:
    """Index every artifact file under one root; keys are dotted id strings."""
    found: dict[str, Artifact] = {}
    for namespace in sorted(KIND_BY_NAMESPACE):
        base = root / namespace
        if not base.is_dir():
            continue
        for path in sorted(base.rglob("*.json")):
            rel = path.relative_to(root)
            segments = rel.parts[:-1] + (rel.stem,)
            try:
                artifact_id = ArtifactId(tuple(segments))
            except ValueError as exc:
                raise ArtifactParseError(f"{path}: {exc}", location=str(path)) from exc
            try:
                raw = path.read_text(encoding="utf-8")
                body = json.loads(raw)
            except (OSError, json.JSONDecodeError) as exc:
                offset = f" at offset {exc.pos}" if isinstance(exc, json.JSONDecodeError) else ""
                raise ArtifactParseError(f"{path}: {exc}{offset}", location=str(path)) from exc
            if not isinstance(body, dict):
                raise ArtifactParseError(f"{path}: artifact body must be a JSON object", location=str(path))
            declared = body.get("type")
            if declared != artifact_id.kind:
                raise ArtifactParseError(
                    f"{path}: type field is {declared!r} but path implies {artifact_id.kind!r}",
                    location=str(path),
                )
            key = str(artifact_id)
            if key in found:
                raise DuplicateArtifactError(f"duplicate artifact {key} within root {root}", location=str(path))
            found[key] = Artifact(id=artifact_id, kind=artifact_id.kind, body=body, source_root=root)
    return found


class CatalogRoots:
    """Layered artifact registry; later roots shadow earlier ones."""

    def __init__(self, roots: list[Path], indexes: list[dict[str, Artifact]]):
        self.roots = roots
        self._indexes = indexes
        # Precedence-resolved view: later roots win.
        merged: dict[str, Artifact] = {}
        for index in indexes:
            merged.update(index)
        self._merged = merged

    def __len__(self) -> int:
        return len(self._merged)

    def ids(self) -> list[str]:
        return sorted(self._merged)

    def lookup(self, artifact_id: ArtifactId | str) -> Artifact:
        """Precedence lookup without transitive resolution."""
        key = str(artifact_id)
        if key not in self._merged:
            suggestions = difflib.get_close_matches(key, self._merged.keys(), n=3, cutoff=0.5)
            hint = f" (did you mean: {', '.join(suggestions)}?)" if suggestions else ""
            raise ArtifactNotFoundError(f"artifact {key} not found{hint}", suggestions=suggestions)
        return self._merged[key]

    def resolve(self, artifact_id: ArtifactId | str) -> Artifact:
        """Lookup plus transitive validation of every referenced artifact.

        Follows the per-kind reference slots (card -> task/templates,
        task -> metrics, template -> postprocessors, recipe -> ingredients)
        and the generic "ref" key, checking existence, slot kind agreement,
        and acyclicity.
        """
        artifact = self.lookup(artifact_id)
        self._resolve_refs(artifact, stack=[str(artifact.id)], seen=set())
        return artifact

    def _resolve_refs(self, artifact: Artifact, stack: list[str], seen: set[str]) -> None:
        key = str(artifact.id)
        if key in seen:
            return
        for ref_id, expected_kind, slot in _references_of(artifact):
            ref_key = str(ref_id)
            if ref_key in stack:
                chain = stack[stack.index(ref_key) :] + [ref_key]
                raise ReferenceCycleError(
                    f"reference cycle: {' -> '.join(chain)}", chain=chain, location=f"{key}.{slot}"
                )
            target = self.lookup(ref_id)
            if expected_kind is not None and target.kind != expected_kind:
                raise KindMismatchError(
                    f"{key}.{slot} references {ref_key} of kind {target.kind!r}, expected {expected_kind!r}",
                    location=f"{key}.{slot}",
                )
            self._resolve_refs(target, stack + [ref_key], seen)
        seen.add(key)

    def list_by_kind(self, kind: str) -> list[ArtifactId]:
        """Sorted ids of one kind, shadowed entries listed once."""
        if kind not in NAMESPACE_BY_KIND:
            raise KindMismatchError(f"unknown artifact kind {kind!r}")
        return [self._merged[key].id for key in sorted(self._merged) if self._merged[key].kind == kind]


def _references_of(artifact: Artifact):
    """Yield (ArtifactId, expected_kind or None, slot_name) for each reference."""
    slots = _REFERENCE_SLOTS.get(artifact.kind, {})
    for slot, expected_kind in slots.items():
        value = artifact.body.get(slot)
        if value is None:
            continue
        items = value if isinstance(value, list) else [value]
        for item in items:
            if not isinstance(item, str):
                raise ArtifactParseError(
                    f"{artifact.id}: field {slot!r} must hold artifact id strings",
                    location=f"{artifact.id}.{slot}",
                )
            yield _parse_ref(artifact, slot, item), expected_kind, slot
    ref = artifact.body.get("ref")
    if ref is not None:
        if not isinstance(ref, str):
            raise ArtifactParseError(f"{artifact.id}: 'ref' must be an artifact id string")
        yield _parse_ref(artifact, "ref", ref), None, "ref"


def _parse_ref(artifact: Artifact, slot: str, text: str) -> ArtifactId:
    try:
        return ArtifactId.parse(text)
    except ValueError as exc:
        raise ArtifactParseError(
            f"{artifact.id}.{slot}: invalid artifact reference {text!r}: {exc}",
            location=f"{artifact.id}.{slot}",
        ) from exc


def load_roots(paths: list[str | Path]) -> CatalogRoots:
    """Load and index catalog roots; earliest path has lowest precedence."""
    roots: list[Path] = []
    indexes: list[dict[str, Artifact]] = []
    for raw in paths:
        root = Path(raw)
        if not root.is_dir():
            raise RootNotFoundError(f"catalog root not found: {root}", location=str(root))
        roots.append(root)
        indexes.append(_scan_root(root))
    return CatalogRoots(roots, indexes)


def roots_from_env(cli_paths: list[str] | None = None) -> CatalogRoots:
    """Catalog roots from --catalog flags, else the PROMPTFORGE_CATALOGS env var.

    CLI flags, when present, replace the env var entirely.
    """
    if cli_paths:
        return load_roots(list(cli_paths))
    env = os.environ.get(ENV_CATALOGS, "")
    paths = [p for p in env.split(os.pathsep) if p]
    if not paths:
        raise RootNotFoundError(
            f"no catalog roots configured; pass --catalog or set {ENV_CATALOGS}"
        )
    return load_roots(paths)
