"""Formats: final prompt assembly.

A format owns everything about how verbalized text is arranged on the wire:
system prompt decoration, demo layout, separators, the target prefix, and
whitespace policy. Templates decide *what* is said; formats decide *where*.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .catalog import Artifact, ArtifactId
from .errors import ArtifactParseError, FormatError
from .rng import KeyedStream, hash64
from .template import VerbalizedInstance, placeholder_names

LAYOUT_PLACEHOLDERS = {"system_prompt", "demos", "source", "target_prefix"}
DEMO_PLACEHOLDERS = {"source", "target"}

INSTRUCTION_PLACEMENTS = ("first_turn", "every_turn", "none")
DEMO_SAMPLING_MODES = ("per_instance", "fixed")


@dataclass(frozen=True)
class SystemPrompt:
    id: ArtifactId
    text: str


def parse_system_prompt(artifact: Artifact) -> SystemPrompt:
    if artifact.kind != "system_prompt":
        raise ArtifactParseError(f"{artifact.id} is a {artifact.kind}, not a system_prompt")
    text = artifact.body.get("text")
    if not isinstance(text, str) or not text:
        raise ArtifactParseError(f"{artifact.id}: 'text' must be a non-empty string")
    return SystemPrompt(id=artifact.id, text=text)


@dataclass(frozen=True)
class Format:
    id: ArtifactId
    layout: str
    demo_layout: str
    target_prefix: str = ""
    demo_separator: str = "\n"
    system_prompt_wrapper: tuple[str, str] | None = None
    hanging_indent: bool = False
    instruction_placement: str = "first_turn"
    demo_sampling: str = "per_instance"


def parse_format(artifact: Artifact) -> Format:
    if artifact.kind != "format":
        raise ArtifactParseError(f"{artifact.id} is a {artifact.kind}, not a format")
    body = artifact.body
    where = str(artifact.id)
    allowed = {"type", "ref", "description", "layout", "demo_layout", "target_prefix",
               "demo_separator", "system_prompt_wrapper", "hanging_indent",
               "instruction_placement", "demo_sampling"}
    unknown = set(body) - allowed
    if unknown:
        raise ArtifactParseError(f"{where}: unknown keys {sorted(unknown)}", location=where)
    layout = body.get("layout")
    demo_layout = body.get("demo_layout")
    if not isinstance(layout, str) or not layout:
        raise ArtifactParseError(f"{where}: 'layout' must be a non-empty string", location=where)
    if not isinstance(demo_layout, str) or not demo_layout:
        raise ArtifactParseError(f"{where}: 'demo_layout' must be a non-empty string", location=where)

    names = placeholder_names(layout, where)
    unknown_slots = set(names) - LAYOUT_PLACEHOLDERS
    if unknown_slots:
        raise ArtifactParseError(f"{where}: layout has unknown slots {sorted(unknown_slots)}", location=where)
    if names.count("source") != 1:
        raise ArtifactParseError(f"{where}: layout must contain {{source}} exactly once", location=where)
    demo_names = placeholder_names(demo_layout, where)
    unknown_slots = set(demo_names) - DEMO_PLACEHOLDERS
    if unknown_slots:
        raise ArtifactParseError(
            f"{where}: demo_layout has unknown slots {sorted(unknown_slots)}", location=where
        )
    if demo_names.count("source") != 1 or demo_names.count("target") != 1:
        raise ArtifactParseError(
            f"{where}: demo_layout must contain {{source}} and {{target}} exactly once", location=where
        )

    wrapper = body.get("system_prompt_wrapper")
    if wrapper is not None:
        if (
            not isinstance(wrapper, list)
            or len(wrapper) != 2
            or not all(isinstance(part, str) for part in wrapper)
        ):
            raise ArtifactParseError(
                f"{where}: 'system_prompt_wrapper' must be a two-string list [open, close]", location=where
            )
        wrapper = (wrapper[0], wrapper[1])
    placement = body.get("instruction_placement", "first_turn")
    if placement not in INSTRUCTION_PLACEMENTS:
        raise ArtifactParseError(
            f"{where}: 'instruction_placement' must be one of {INSTRUCTION_PLACEMENTS}", location=where
        )
    sampling = body.get("demo_sampling", "per_instance")
    if sampling not in DEMO_SAMPLING_MODES:
        raise ArtifactParseError(
            f"{where}: 'demo_sampling' must be one of {DEMO_SAMPLING_MODES}", location=where
        )
    for key in ("target_prefix", "demo_separator"):
        if key in body and not isinstance(body[key], str):
            raise ArtifactParseError(f"{where}: {key!r} must be a string", location=where)
    if "hanging_indent" in body and not isinstance(body["hanging_indent"], bool):
        raise ArtifactParseError(f"{where}: 'hanging_indent' must be a boolean", location=where)
    return Format(
        id=artifact.id,
        layout=layout,
        demo_layout=demo_layout,
        target_prefix=body.get("target_prefix", ""),
        demo_separator=body.get("demo_separator", "\n"),
        system_prompt_wrapper=wrapper,
        hanging_indent=bool(body.get("hanging_indent", False)),
        instruction_placement=placement,
        demo_sampling=sampling,
    )


# --------------------------------------------------------------------------
# Demo pool and sampling.


@dataclass(frozen=True)
class DemoEntry:
    instruction: str
    body: str
    target_text: str
    fingerprint: str


@dataclass(frozen=True)
class DemoPool:
    entries: tuple[DemoEntry, ...]

    def fingerprints(self) -> frozenset[str]:
        return frozenset(entry.fingerprint for entry in self.entries)


def entry_from_verbalized(instance: VerbalizedInstance) -> DemoEntry:
    return DemoEntry(
        instruction=instance.instruction,
        body=instance.body,
        target_text=instance.target_text,
        fingerprint=instance.fingerprint,
    )


def build_demo_pool(
    train: list[VerbalizedInstance], size: int, seed: int
) -> tuple[DemoPool, list[VerbalizedInstance]]:
    """Carve the demo pool out of the verbalized train split.

    The pool is the first ``size`` instances of a seeded permutation; the
    remainder keeps its original order and is what the train split emits.
    """
    if size <= 0:
        raise FormatError(f"demo pool size must be positive, got {size}")
    if size >= len(train):
        raise FormatError(
            f"demo pool size {size} would consume the whole train split of {len(train)} instances"
        )
    order = KeyedStream(hash64(seed, "demo_pool")).shuffled_indices(len(train))
    picked = order[:size]
    pool = DemoPool(entries=tuple(entry_from_verbalized(train[i]) for i in picked))
    picked_set = set(picked)
    remaining = [inst for i, inst in enumerate(train) if i not in picked_set]
    return pool, remaining


def sample_demos(pool: DemoPool, num_demos: int, instance_index: int, seed: int) -> list[DemoEntry]:
    """Per-instance demo draw; distinct indices, order given by the draw."""
    if num_demos > len(pool.entries):
        raise FormatError(f"cannot sample {num_demos} demos from a pool of {len(pool.entries)}")
    stream = KeyedStream(hash64(seed, "demos", instance_index))
    picked = stream.sample_without_replacement(len(pool.entries), num_demos)
    return [pool.entries[i] for i in picked]


def sample_fixed_demos(pool: DemoPool, num_demos: int, seed: int) -> list[DemoEntry]:
    """One draw reused by every instance (demo_sampling="fixed")."""
    if num_demos > len(pool.entries):
        raise FormatError(f"cannot sample {num_demos} demos from a pool of {len(pool.entries)}")
    stream = KeyedStream(hash64(seed, "demos_fixed"))
    picked = stream.sample_without_replacement(len(pool.entries), num_demos)
    return [pool.entries[i] for i in picked]


# --------------------------------------------------------------------------
# Rendering.


def _indent_continuations(value: str, column: int) -> str:
    if column <= 0 or "\n" not in value:
        return value
    return value.replace("\n", "\n" + " " * column)


def place_instruction(
    fmt: Format, instruction: str, demo_bodies: list[str], query_body: str
) -> tuple[list[str], str]:
    """Apply the instruction placement policy to demo and query turn texts."""
    if not instruction or fmt.instruction_placement == "none":
        return list(demo_bodies), query_body
    joined = [instruction + "\n" + body for body in demo_bodies]
    if fmt.instruction_placement == "every_turn":
        return joined, instruction + "\n" + query_body
    # first_turn: instruction opens whichever turn comes first.
    if demo_bodies:
        return [joined[0], *demo_bodies[1:]], query_body
    return [], instruction + "\n" + query_body


_SLOT_RE = re.compile(r"\{\{|\}\}|\{([a-z0-9_]+)\}|[{}]")


def _expand_tracking_columns(layout: str, values: dict[str, str], hanging: bool, where: str) -> str:
    out: list[str] = []
    pos = 0
    for match in _SLOT_RE.finditer(layout):
        out.append(layout[pos : match.start()])
        token = match.group(0)
        pos = match.end()
        if token == "{{":
            out.append("{")
            continue
        if token == "}}":
            out.append("}")
            continue
        if token in ("{", "}"):
            raise FormatError(f"{where}: stray {token!r} in layout", location=where)
        name = match.group(1)
        value = values[name]
        if hanging:
            so_far = "".join(out)
            column = len(so_far) - (so_far.rfind("\n") + 1)
            value = _indent_continuations(value, column)
        out.append(value)
    out.append(layout[pos:])
    return "".join(out)


def render_demo(fmt: Format, source: str, target: str) -> str:
    return _expand_tracking_columns(
        fmt.demo_layout,
        {"source": source, "target": target},
        fmt.hanging_indent,
        str(fmt.id),
    )


def render(
    fmt: Format,
    system_prompt: str | None,
    demos: list[tuple[str, str]],
    source: str,
    instruction: str = "",
) -> str:
    """Assemble the final prompt string.

    ``demos`` is a list of (body, target) pairs; ``source`` is the query body.
    The system prompt slot renders as a self-terminating block: wrapped text
    plus a newline when present, empty otherwise, so a missing prompt leaves
    no blank line behind. The demos slot joins each rendered demo with the
    separator after it, which likewise collapses cleanly at zero demos.
    """
    demo_bodies, query = place_instruction(fmt, instruction, [body for body, _ in demos], source)
    rendered_demos = [
        render_demo(fmt, body, target) for body, (_, target) in zip(demo_bodies, demos)
    ]
    demos_block = "".join(text + fmt.demo_separator for text in rendered_demos)

    if system_prompt:
        open_part, close_part = fmt.system_prompt_wrapper or ("", "")
        system_block = open_part + system_prompt + close_part + "\n"
    else:
        system_block = ""

    return _expand_tracking_columns(
        fmt.layout,
        {
            "system_prompt": system_block,
            "demos": demos_block,
            "source": query,
            "target_prefix": fmt.target_prefix,
        },
        fmt.hanging_indent,
        str(fmt.id),
    )
