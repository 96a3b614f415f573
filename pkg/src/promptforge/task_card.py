"""Task schemas and data-task cards.

A Task declares the typed input/output interface plus the metrics that score
it. A DataTaskCard binds a raw-data loader and preprocessing operators to a
task, optionally recommending templates. ``standardize`` runs the card and
appends the schema-check stage that guarantees every emitted instance carries
exactly the task's fields with the declared types.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .catalog import Artifact, ArtifactId, CatalogRoots
from .errors import ArtifactParseError, SchemaError
from .stream_ops import (
    SEMANTIC_TYPES,
    Instance,
    MultiStream,
    OperatorSpec,
    load,
    pipe,
    semantic_type,
)

# Instances may carry this extra list-of-text field; the schema check passes
# it through so templates can attach multiple evaluation references.
REFERENCES_FIELD = "references"

_COMMON_KEYS = {"type", "ref", "description"}


def _reject_unknown_keys(body: dict, allowed: set[str], where: str) -> None:
    unknown = set(body) - allowed - _COMMON_KEYS
    if unknown:
        raise ArtifactParseError(f"{where}: unknown keys {sorted(unknown)}", location=where)


@dataclass(frozen=True)
class Task:
    id: ArtifactId
    input_fields: dict[str, str]
    output_fields: dict[str, str]
    metric_ids: tuple[ArtifactId, ...]
    label_options: tuple[str, ...] = ()

    @property
    def all_fields(self) -> dict[str, str]:
        return {**self.input_fields, **self.output_fields}


def parse_task(artifact: Artifact) -> Task:
    if artifact.kind != "task":
        raise ArtifactParseError(f"{artifact.id} is a {artifact.kind}, not a task")
    body = artifact.body
    where = str(artifact.id)
    _reject_unknown_keys(body, {"input_fields", "output_fields", "metrics", "label_options"}, where)
    inputs = body.get("input_fields")
    outputs = body.get("output_fields")
    metrics = body.get("metrics")
    if not isinstance(inputs, dict) or not inputs:
        raise ArtifactParseError(f"{where}: 'input_fields' must be a non-empty map", location=where)
    if not isinstance(outputs, dict) or not outputs:
        raise ArtifactParseError(f"{where}: 'output_fields' must be a non-empty map", location=where)
    if not isinstance(metrics, list) or not metrics:
        raise ArtifactParseError(f"{where}: 'metrics' must be a non-empty list", location=where)
    for name, kind in {**inputs, **outputs}.items():
        if kind not in SEMANTIC_TYPES:
            raise ArtifactParseError(
                f"{where}: field {name!r} has unknown type {kind!r}; expected one of {SEMANTIC_TYPES}",
                location=where,
            )
    overlap = set(inputs) & set(outputs)
    if overlap:
        raise ArtifactParseError(f"{where}: fields {sorted(overlap)} are both input and output", location=where)
    if REFERENCES_FIELD in inputs or REFERENCES_FIELD in outputs:
        raise ArtifactParseError(f"{where}: {REFERENCES_FIELD!r} is a reserved field name", location=where)
    options = body.get("label_options", [])
    if not isinstance(options, list) or not all(isinstance(o, str) for o in options):
        raise ArtifactParseError(f"{where}: 'label_options' must be a list of strings", location=where)
    return Task(
        id=artifact.id,
        input_fields=dict(inputs),
        output_fields=dict(outputs),
        metric_ids=tuple(ArtifactId.parse(m) for m in metrics),
        label_options=tuple(options),
    )


@dataclass(frozen=True)
class DataTaskCard:
    id: ArtifactId
    loader_spec: dict
    preprocess_ops: tuple[OperatorSpec, ...]
    task_ref: ArtifactId
    template_ids: tuple[ArtifactId, ...]
    source_root: Path


def parse_card(artifact: Artifact) -> DataTaskCard:
    if artifact.kind != "card":
        raise ArtifactParseError(f"{artifact.id} is a {artifact.kind}, not a card")
    body = artifact.body
    where = str(artifact.id)
    _reject_unknown_keys(body, {"loader", "preprocess_ops", "task", "templates"}, where)
    loader = body.get("loader")
    if not isinstance(loader, dict):
        raise ArtifactParseError(f"{where}: 'loader' must be an object", location=where)
    task_ref = body.get("task")
    if not isinstance(task_ref, str):
        raise ArtifactParseError(f"{where}: 'task' must be an artifact id", location=where)
    ops_raw = body.get("preprocess_ops", [])
    ops = tuple(
        OperatorSpec.from_dict(op, where=f"{where}.preprocess_ops[{i}]") for i, op in enumerate(ops_raw)
    )
    templates_raw = body.get("templates", [])
    return DataTaskCard(
        id=artifact.id,
        loader_spec=loader,
        preprocess_ops=ops,
        task_ref=ArtifactId.parse(task_ref),
        template_ids=tuple(ArtifactId.parse(t) for t in templates_raw),
        source_root=artifact.source_root,
    )


@dataclass
class DropReport:
    """Counts of extra raw fields dropped by the schema check, per split."""

    dropped: dict[str, dict[str, int]] = field(default_factory=dict)

    def record(self, split: str, field_name: str) -> None:
        per_split = self.dropped.setdefault(split, {})
        per_split[field_name] = per_split.get(field_name, 0) + 1

    def reset_split(self, split: str) -> None:
        self.dropped[split] = {}


def conform_instance(instance: Instance, task: Task, where: str) -> tuple[Instance, list[str]]:
    """Project an instance onto the task schema.

    Returns the conformant instance (task fields in declared order, plus the
    reserved references field when present) and the list of dropped fields.
    Missing fields or type mismatches raise SchemaError.
    """
    out: Instance = {}
    for name, expected in task.all_fields.items():
        if name not in instance:
            raise SchemaError(f"{where}: missing field {name!r} (expected {expected})")
        value = instance[name]
        actual = semantic_type(value)
        if actual != expected:
            raise SchemaError(f"{where}: field {name!r} is {actual}, expected {expected}")
        out[name] = value
    dropped = []
    for name in instance:
        if name in out:
            continue
        if name == REFERENCES_FIELD:
            if semantic_type(instance[name]) != "list_of_text":
                raise SchemaError(f"{where}: {REFERENCES_FIELD!r} must be a list of text")
            out[REFERENCES_FIELD] = instance[name]
        else:
            dropped.append(name)
    return out, dropped


def schema_check(stream: MultiStream, task: Task, report: DropReport) -> MultiStream:
    """Append the schema-conformance stage to every split."""

    def checked(split: str, src) -> "MultiStream.splits":  # type: ignore[name-defined]
        def gen() -> Iterator[Instance]:
            report.reset_split(split)
            for i, instance in enumerate(src()):
                out, dropped = conform_instance(instance, task, f"{split}[{i}]")
                for name in dropped:
                    report.record(split, name)
                yield out

        return gen

    return MultiStream({split: checked(split, src) for split, src in stream.splits.items()})


def standardize(
    card: DataTaskCard,
    task: Task,
    seed: int,
    loader_limit: int | None = None,
    report: DropReport | None = None,
) -> MultiStream:
    """Run loader + card operators + schema check; emits task-conformant instances."""
    stream = load(card.loader_spec, base_dir=card.source_root, loader_limit=loader_limit)
    stream = pipe(list(card.preprocess_ops), stream, seed)
    return schema_check(stream, task, report if report is not None else DropReport())


# Metric kind -> the task output type it scores. Used by validate_task.
METRIC_OUTPUT_TYPES = {
    "spearman": "real",
    "f1_micro_multi_label": "list_of_text",
    "accuracy": "text",
}


def validate_task(task: Task, roots: CatalogRoots) -> list[dict]:
    """Compatibility diagnostics between a task and its declared metrics.

    Returns a list of diagnostic dicts (empty when everything is compatible);
    never raises for type mismatches.
    """
    diagnostics: list[dict] = []
    if len(task.output_fields) != 1:
        diagnostics.append(
            {
                "level": "warning",
                "message": f"{task.id}: metric typing assumes one output field, found {len(task.output_fields)}",
            }
        )
    output_type = next(iter(task.output_fields.values()))
    for metric_id in task.metric_ids:
        try:
            artifact = roots.resolve(metric_id)
        except Exception as exc:  # surface resolution problems as diagnostics
            diagnostics.append({"level": "error", "message": f"{task.id}: metric {metric_id}: {exc}"})
            continue
        kind = artifact.body.get("metric")
        wanted = METRIC_OUTPUT_TYPES.get(kind)
        if wanted is None:
            diagnostics.append(
                {"level": "error", "message": f"{task.id}: metric {metric_id} has unknown kind {kind!r}"}
            )
        elif wanted != output_type:
            diagnostics.append(
                {
                    "level": "error",
                    "message": (
                        f"{task.id}: metric {metric_id} scores {wanted} outputs, "
                        f"but the task output is {output_type}"
                    ),
                }
            )
    return diagnostics
