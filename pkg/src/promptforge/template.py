"""Templates: verbalization of task instances and de-verbalization of outputs.

A template turns a typed instance into instruction text, an input body, and a
target string, and names the postprocessor chain that maps raw model output
back into the task's typed output space. Verbalization never reads raw data
directly; it only sees task-conformant instances.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .catalog import Artifact, ArtifactId, canonical_json
from .errors import ArtifactParseError, TemplateError
from .stream_ops import Instance, render_value
from .task_card import REFERENCES_FIELD, Task

_PLACEHOLDER_RE = re.compile(r"\{\{|\}\}|\{([a-z0-9_]+)\}|[{}]")


def placeholder_names(text: str, where: str = "template") -> list[str]:
    """All placeholder names in text, in order. Rejects stray braces."""
    names: list[str] = []
    for match in _PLACEHOLDER_RE.finditer(text):
        token = match.group(0)
        if token in ("{{", "}}"):
            continue
        if token in ("{", "}"):
            raise TemplateError(
                f"{where}: stray {token!r} at offset {match.start()}; double it to escape",
                location=where,
            )
        names.append(match.group(1))
    return names


def expand(text: str, values: dict[str, str], where: str = "template") -> str:
    """Substitute placeholders; ``{{``/``}}`` escape literal braces."""

    def sub(match: re.Match[str]) -> str:
        token = match.group(0)
        if token == "{{":
            return "{"
        if token == "}}":
            return "}"
        if token in ("{", "}"):
            raise TemplateError(
                f"{where}: stray {token!r} at offset {match.start()}; double it to escape",
                location=where,
            )
        name = match.group(1)
        if name not in values:
            raise TemplateError(f"{where}: unknown placeholder {{{name}}}", location=where)
        return values[name]

    return _PLACEHOLDER_RE.sub(sub, text)


@dataclass(frozen=True)
class Template:
    id: ArtifactId
    input_format: str
    instruction: str = ""
    target_format: str | None = None
    target_verbalization: dict[str, str] = field(default_factory=dict)
    postprocessor_ids: tuple[ArtifactId, ...] = ()


def parse_template(artifact: Artifact) -> Template:
    if artifact.kind != "template":
        raise ArtifactParseError(f"{artifact.id} is a {artifact.kind}, not a template")
    body = artifact.body
    where = str(artifact.id)
    allowed = {"type", "ref", "description", "instruction", "input_format",
               "target_format", "target_verbalization", "postprocessors"}
    unknown = set(body) - allowed
    if unknown:
        raise ArtifactParseError(f"{where}: unknown keys {sorted(unknown)}", location=where)
    input_format = body.get("input_format")
    if not isinstance(input_format, str) or not input_format:
        raise ArtifactParseError(f"{where}: 'input_format' must be a non-empty string", location=where)
    instruction = body.get("instruction", "")
    if not isinstance(instruction, str):
        raise ArtifactParseError(f"{where}: 'instruction' must be a string", location=where)
    target_format = body.get("target_format")
    if target_format is not None and not isinstance(target_format, str):
        raise ArtifactParseError(f"{where}: 'target_format' must be a string", location=where)
    verbalization = body.get("target_verbalization", {})
    if not isinstance(verbalization, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in verbalization.items()
    ):
        raise ArtifactParseError(f"{where}: 'target_verbalization' must map strings to strings", location=where)
    if len(set(verbalization.values())) != len(verbalization):
        raise ArtifactParseError(f"{where}: 'target_verbalization' must be injective", location=where)
    processors = body.get("postprocessors", [])
    if not isinstance(processors, list):
        raise ArtifactParseError(f"{where}: 'postprocessors' must be a list", location=where)
    # Validate placeholder syntax up front so bad templates fail at load time.
    placeholder_names(input_format, where)
    placeholder_names(instruction, where)
    if target_format is not None:
        placeholder_names(target_format, where)
    return Template(
        id=artifact.id,
        input_format=input_format,
        instruction=instruction,
        target_format=target_format,
        target_verbalization=dict(verbalization),
        postprocessor_ids=tuple(ArtifactId.parse(p) for p in processors),
    )


def check_template_fields(template: Template, task: Task) -> None:
    """Every placeholder must name a task field of the right side."""
    where = str(template.id)
    for name in placeholder_names(template.instruction, where) + placeholder_names(
        template.input_format, where
    ):
        if name not in task.input_fields:
            raise TemplateError(
                f"{where}: placeholder {{{name}}} is not an input field of {task.id}",
                location=where,
            )
    if template.target_format is not None:
        names = placeholder_names(template.target_format, where)
        if not names:
            raise TemplateError(f"{where}: 'target_format' must reference an output field", location=where)
        for name in names:
            if name not in task.output_fields:
                raise TemplateError(
                    f"{where}: placeholder {{{name}}} is not an output field of {task.id}",
                    location=where,
                )


@dataclass(frozen=True)
class VerbalizedInstance:
    """A task instance turned into text, before any format is applied."""

    instruction: str
    body: str
    target_text: str
    references: tuple[str, ...]
    fields: dict[str, object]
    fingerprint: str

    @property
    def input_text(self) -> str:
        if self.instruction:
            return self.instruction + "\n" + self.body
        return self.body


def instance_fingerprint(fields: dict[str, object]) -> str:
    """Content hash of the typed field values, independent of verbalization."""
    return hashlib.sha256(canonical_json(fields).encode("utf-8")).hexdigest()


def verbalize(template: Template, instance: Instance, task: Task) -> VerbalizedInstance:
    where = str(template.id)
    rendered = {name: render_value(instance[name]) for name in task.all_fields}
    body = expand(template.input_format, rendered, where)
    instruction = expand(template.instruction, rendered, where) if template.instruction else ""

    target_values = dict(rendered)
    for name in task.output_fields:
        raw = rendered[name]
        if template.target_verbalization:
            if raw not in template.target_verbalization:
                raise TemplateError(
                    f"{where}: output value {raw!r} has no entry in target_verbalization",
                    location=where,
                )
            target_values[name] = template.target_verbalization[raw]
    target_format = template.target_format
    if target_format is None:
        only = next(iter(task.output_fields))
        target_format = "{" + only + "}"
    target_text = expand(target_format, target_values, where)

    refs = instance.get(REFERENCES_FIELD)
    references = tuple(refs) if refs else (target_text,)
    fields = {name: instance[name] for name in task.all_fields}
    return VerbalizedInstance(
        instruction=instruction,
        body=body,
        target_text=target_text,
        references=references,
        fields=fields,
        fingerprint=instance_fingerprint(fields),
    )


# --------------------------------------------------------------------------
# De-verbalization: postprocessor chains.


@dataclass(frozen=True)
class ParseFailure:
    """A prediction the chain could not turn into a typed value."""

    text: str
    reason: str


@dataclass(frozen=True)
class Postprocessor:
    id: ArtifactId
    kind: str
    params: dict


# Kinds that turn text into a typed value; only valid as the last chain step.
TYPE_PARSING_KINDS = {"to_real", "split_labels", "invert_verbalization"}
TEXT_KINDS = {"take_first_non_empty_line", "lowercase", "strip_whitespace"}
PROCESSOR_KINDS = TYPE_PARSING_KINDS | TEXT_KINDS


def parse_postprocessor(artifact: Artifact) -> Postprocessor:
    if artifact.kind != "processor":
        raise ArtifactParseError(f"{artifact.id} is a {artifact.kind}, not a processor")
    body = artifact.body
    where = str(artifact.id)
    kind = body.get("kind")
    if kind not in PROCESSOR_KINDS:
        raise ArtifactParseError(
            f"{where}: unknown processor kind {kind!r}; expected one of {sorted(PROCESSOR_KINDS)}",
            location=where,
        )
    params = {k: v for k, v in body.items() if k not in ("type", "kind", "ref", "description")}
    allowed_params = {"split_labels": {"separator"}, "invert_verbalization": {"mapping"}}
    extra = set(params) - allowed_params.get(kind, set())
    if extra:
        raise ArtifactParseError(f"{where}: unknown params {sorted(extra)} for kind {kind!r}", location=where)
    if kind == "split_labels":
        sep = params.get("separator", ", ")
        if not isinstance(sep, str) or not sep:
            raise ArtifactParseError(f"{where}: 'separator' must be a non-empty string", location=where)
        params["separator"] = sep
    if kind == "invert_verbalization":
        mapping = params.get("mapping")
        if mapping is not None:
            if not isinstance(mapping, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in mapping.items()
            ):
                raise ArtifactParseError(f"{where}: 'mapping' must map strings to strings", location=where)
            if len(set(mapping.values())) != len(mapping):
                raise ArtifactParseError(f"{where}: 'mapping' must be injective", location=where)
    return Postprocessor(id=artifact.id, kind=kind, params=params)


def validate_chain(processors: list[Postprocessor], where: str = "postprocessors") -> None:
    """Text ops may appear anywhere; a type-parsing op only as the last step."""
    for i, proc in enumerate(processors):
        if proc.kind in TYPE_PARSING_KINDS and i != len(processors) - 1:
            raise TemplateError(
                f"{where}: {proc.id} ({proc.kind}) parses text into a typed value "
                "and must be the last step of the chain",
                location=where,
            )


_UNITS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11,
    "twelve": 12, "thirteen": 13, "fourteen": 14, "fifteen": 15,
    "sixteen": 16, "seventeen": 17, "eighteen": 18, "nineteen": 19,
}
_TENS = {
    "twenty": 20, "thirty": 30, "forty": 40, "fifty": 50,
    "sixty": 60, "seventy": 70, "eighty": 80, "ninety": 90,
}
_DIGITS = {w: d for w, d in _UNITS.items() if d <= 9}
_DECIMAL_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)$")


def _parse_cardinal(tokens: list[str]) -> tuple[int, list[str]] | None:
    if not tokens:
        return None
    head = tokens[0]
    if head in _UNITS:
        return _UNITS[head], tokens[1:]
    if head in _TENS:
        value = _TENS[head]
        rest = tokens[1:]
        if rest and rest[0] in _UNITS and 1 <= _UNITS[rest[0]] <= 9:
            return value + _UNITS[rest[0]], rest[1:]
        return value, rest
    return None


def parse_real(text: str) -> float | ParseFailure:
    """Parse a decimal literal or an English number phrase into a float.

    Accepts cardinals up to ninety-nine, optionally followed by "and a half",
    "and a quarter", or "point" plus digit words. Anything else fails.
    """
    stripped = text.strip()
    if _DECIMAL_RE.match(stripped):
        return float(stripped)
    tokens = stripped.lower().replace("-", " ").split()
    parsed = _parse_cardinal(tokens)
    if parsed is None:
        return ParseFailure(text=text, reason="not a number")
    value, rest = parsed
    if not rest:
        return float(value)
    if rest == ["and", "a", "half"]:
        return value + 0.5
    if rest == ["and", "a", "quarter"]:
        return value + 0.25
    if rest[0] == "point" and len(rest) > 1 and all(t in _DIGITS for t in rest[1:]):
        decimals = "".join(str(_DIGITS[t]) for t in rest[1:])
        return float(f"{value}.{decimals}")
    return ParseFailure(text=text, reason=f"trailing words {rest!r} after number")


def _take_first_non_empty_line(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return line
    return ""


def apply_postprocessor(proc: Postprocessor, value: str) -> object:
    """One chain step. Text kinds return str; type-parsing kinds return a typed
    value or ParseFailure."""
    if proc.kind == "take_first_non_empty_line":
        return _take_first_non_empty_line(value)
    if proc.kind == "lowercase":
        return value.lower()
    if proc.kind == "strip_whitespace":
        return value.strip()
    if proc.kind == "to_real":
        return parse_real(value)
    if proc.kind == "split_labels":
        sep = proc.params.get("separator", ", ")
        return [item.strip() for item in value.split(sep) if item.strip()]
    if proc.kind == "invert_verbalization":
        mapping = proc.params.get("mapping")
        if not mapping:
            return ParseFailure(text=value, reason=f"{proc.id}: no mapping configured")
        inverse = {v: k for k, v in mapping.items()}
        if value in inverse:
            return inverse[value]
        return ParseFailure(text=value, reason=f"{value!r} is not a known verbalized label")
    raise TemplateError(f"unknown processor kind {proc.kind!r}")


def run_chain(processors: list[Postprocessor], text: str) -> object:
    """Run the full chain; short-circuits on the first ParseFailure."""
    value: object = text
    for proc in processors:
        if isinstance(value, ParseFailure):
            return value
        if not isinstance(value, str):
            raise TemplateError(
                f"{proc.id}: chain produced a typed value before the last step",
            )
        value = apply_postprocessor(proc, value)
    return value
