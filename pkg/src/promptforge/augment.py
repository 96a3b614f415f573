"""Robustness augmentors.

Augmentors perturb text or demo labels under the recipe seed so that the same
recipe string always produces the same perturbations. Each site in the
pipeline derives its own stream key, so augmentors never share random state
with demo sampling or split shuffling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import Artifact, ArtifactId
from .errors import ArtifactParseError, OperatorError
from .format import DemoEntry, DemoPool
from .rng import KeyedStream, hash64

AUGMENTOR_KINDS = ("whitespace_noise", "char_typos", "demo_label_noise")
TARGETS = ("pre_template", "post_template", "demo_targets")
TYPO_OPS = ("swap", "delete", "duplicate")

# whitespace_noise inserts one of these after a perturbed character.
_WHITESPACE_CHOICES = (" ", "\t", "  ")


@dataclass(frozen=True)
class Augmentor:
    id: ArtifactId
    kind: str
    target: str
    probability: float
    typo_ops: tuple[str, ...] = field(default=TYPO_OPS)


def parse_augmentor(artifact: Artifact) -> Augmentor:
    if artifact.kind != "augmentor":
        raise ArtifactParseError(f"{artifact.id} is a {artifact.kind}, not an augmentor")
    body = artifact.body
    where = str(artifact.id)
    allowed = {"type", "ref", "description", "kind", "target", "probability", "ops"}
    unknown = set(body) - allowed
    if unknown:
        raise ArtifactParseError(f"{where}: unknown keys {sorted(unknown)}", location=where)
    kind = body.get("kind")
    if kind not in AUGMENTOR_KINDS:
        raise ArtifactParseError(
            f"{where}: unknown augmentor kind {kind!r}; expected one of {AUGMENTOR_KINDS}", location=where
        )
    target = body.get("target")
    if target not in TARGETS:
        raise ArtifactParseError(
            f"{where}: 'target' must be one of {TARGETS}, got {target!r}", location=where
        )
    if kind == "demo_label_noise" and target != "demo_targets":
        raise ArtifactParseError(f"{where}: demo_label_noise only applies to demo_targets", location=where)
    if kind != "demo_label_noise" and target == "demo_targets":
        raise ArtifactParseError(f"{where}: {kind} cannot target demo_targets", location=where)
    probability = body.get("probability")
    if not isinstance(probability, (int, float)) or isinstance(probability, bool):
        raise ArtifactParseError(f"{where}: 'probability' must be a number", location=where)
    if not 0.0 <= float(probability) <= 1.0:
        raise ArtifactParseError(f"{where}: 'probability' must be in [0, 1]", location=where)
    ops = body.get("ops", list(TYPO_OPS))
    if kind != "char_typos" and "ops" in body:
        raise ArtifactParseError(f"{where}: 'ops' is only valid for char_typos", location=where)
    if not isinstance(ops, list) or not ops or not set(ops) <= set(TYPO_OPS):
        raise ArtifactParseError(f"{where}: 'ops' must be a non-empty subset of {TYPO_OPS}", location=where)
    return Augmentor(
        id=artifact.id,
        kind=kind,
        target=target,
        probability=float(probability),
        typo_ops=tuple(ops),
    )


def _whitespace_noise(text: str, p: float, stream: KeyedStream) -> str:
    out: list[str] = []
    for ch in text:
        out.append(ch)
        if stream.next_float() < p:
            out.append(_WHITESPACE_CHOICES[stream.next_below(len(_WHITESPACE_CHOICES))])
    return "".join(out)


def _char_typos(text: str, p: float, ops: tuple[str, ...], stream: KeyedStream) -> str:
    chars = list(text)
    out: list[str] = []
    i = 0
    while i < len(chars):
        ch = chars[i]
        if stream.next_float() < p:
            op = ops[stream.next_below(len(ops))]
            if op == "swap" and i + 1 < len(chars):
                # The swapped-in neighbour is consumed without its own draw.
                out.append(chars[i + 1])
                out.append(ch)
                i += 2
                continue
            if op == "delete":
                i += 1
                continue
            if op == "duplicate":
                out.append(ch)
                out.append(ch)
                i += 1
                continue
            # swap at the last character has no neighbour; leave it alone.
        out.append(ch)
        i += 1
    return "".join(out)


def augment_text(aug: Augmentor, text: str, rng_key: int) -> str:
    """Perturb one text field. The key pins the draw to its pipeline site."""
    if aug.kind == "demo_label_noise":
        raise OperatorError(f"{aug.id}: demo_label_noise does not apply to text")
    stream = KeyedStream(rng_key)
    if aug.kind == "whitespace_noise":
        return _whitespace_noise(text, aug.probability, stream)
    return _char_typos(text, aug.probability, aug.typo_ops, stream)


def noise_demo_labels(
    aug: Augmentor, pool: DemoPool, label_options: tuple[str, ...], rng_key: int
) -> DemoPool:
    """Replace a fraction of pool targets with uniform draws from the label set."""
    if aug.kind != "demo_label_noise":
        raise OperatorError(f"{aug.id}: only demo_label_noise can rewrite demo targets")
    if not label_options:
        raise OperatorError(
            f"{aug.id}: demo_label_noise needs the task to declare label_options"
        )
    entries: list[DemoEntry] = []
    for position, entry in enumerate(pool.entries):
        stream = KeyedStream(hash64(rng_key, "entry", position))
        if stream.next_float() < aug.probability:
            noised = label_options[stream.next_below(len(label_options))]
            entry = DemoEntry(
                instruction=entry.instruction,
                body=entry.body,
                target_text=noised,
                fingerprint=entry.fingerprint,
            )
        entries.append(entry)
    return DemoPool(entries=tuple(entries))
