"""The recipe DSL: one line of key=value pairs naming a full preparation run.

``parse_recipe`` turns the textual form into a RecipeSpec without touching any
catalog; ``resolve_recipe`` binds the spec against catalog roots into typed
artifacts; ``render_recipe`` emits the canonical textual form, which parses
back to an equal spec.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .augment import Augmentor, parse_augmentor
from .catalog import Artifact, ArtifactId, CatalogRoots
from .errors import RecipeSyntaxError, RecipeValidationError
from .format import Format, SystemPrompt, parse_format, parse_system_prompt
from .task_card import DataTaskCard, Task, parse_card, parse_task
from .template import (
    Postprocessor,
    Template,
    check_template_fields,
    parse_postprocessor,
    parse_template,
    placeholder_names,
    validate_chain,
)

_INT_RE = re.compile(r"^\d+$")

_INT_KEYS = {
    "template_card_index",
    "num_demos",
    "demos_pool_size",
    "seed",
    "loader_limit",
    "max_instances",
}
_ID_KEYS = {"card", "template", "sys_prompt", "format"}
KNOWN_KEYS = _INT_KEYS | _ID_KEYS | {"augmentors"}

DEFAULT_SEED = 42
DEFAULT_DEMOS_POOL_SIZE = 100


@dataclass(frozen=True)
class RecipeSpec:
    card: ArtifactId
    format: ArtifactId
    template: ArtifactId | None = None
    template_card_index: int | None = None
    system_prompt: ArtifactId | None = None
    num_demos: int = 0
    demos_pool_size: int = DEFAULT_DEMOS_POOL_SIZE
    seed: int = DEFAULT_SEED
    loader_limit: int | None = None
    max_instances: int | None = None
    augmentors: tuple[ArtifactId, ...] = ()

    def with_seed(self, seed: int) -> "RecipeSpec":
        return RecipeSpec(
            card=self.card,
            format=self.format,
            template=self.template,
            template_card_index=self.template_card_index,
            system_prompt=self.system_prompt,
            num_demos=self.num_demos,
            demos_pool_size=self.demos_pool_size,
            seed=seed,
            loader_limit=self.loader_limit,
            max_instances=self.max_instances,
            augmentors=self.augmentors,
        )


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("#", 1)[0] for line in text.splitlines())


def parse_recipe(text: str) -> RecipeSpec:
    """Parse the textual recipe form. Whitespace and # comments are ignored."""
    seen: dict[str, str] = {}
    for segment in _strip_comments(text).split(","):
        segment = segment.strip()
        if not segment:
            continue  # trailing or doubled commas are harmless
        if "=" not in segment:
            raise RecipeSyntaxError(f"expected key=value, got {segment!r}")
        key, _, value = segment.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KNOWN_KEYS:
            raise RecipeSyntaxError(
                f"unknown recipe key {key!r}; valid keys: {', '.join(sorted(KNOWN_KEYS))}"
            )
        if key in seen:
            raise RecipeSyntaxError(f"duplicate recipe key {key!r}")
        if not value:
            raise RecipeSyntaxError(f"recipe key {key!r} has an empty value")
        seen[key] = value

    if "card" not in seen:
        raise RecipeSyntaxError("recipe is missing the required key 'card'")
    if "format" not in seen:
        raise RecipeSyntaxError("recipe is missing the required key 'format'")
    if "template" in seen and "template_card_index" in seen:
        raise RecipeSyntaxError("'template' and 'template_card_index' are mutually exclusive")
    if "template" not in seen and "template_card_index" not in seen:
        raise RecipeSyntaxError("recipe needs either 'template' or 'template_card_index'")

    def parse_id(key: str) -> ArtifactId:
        try:
            return ArtifactId.parse(seen[key])
        except Exception as exc:
            raise RecipeSyntaxError(f"recipe key {key!r}: {exc}") from None

    def parse_int(key: str) -> int:
        raw = seen[key]
        if not _INT_RE.match(raw):
            raise RecipeSyntaxError(f"recipe key {key!r} must be a non-negative base-10 integer, got {raw!r}")
        return int(raw)

    augmentors: tuple[ArtifactId, ...] = ()
    if "augmentors" in seen:
        parts = [p.strip() for p in seen["augmentors"].split("+")]
        if any(not p for p in parts):
            raise RecipeSyntaxError("recipe key 'augmentors' has an empty entry")
        try:
            augmentors = tuple(ArtifactId.parse(p) for p in parts)
        except Exception as exc:
            raise RecipeSyntaxError(f"recipe key 'augmentors': {exc}") from None

    return RecipeSpec(
        card=parse_id("card"),
        format=parse_id("format"),
        template=parse_id("template") if "template" in seen else None,
        template_card_index=parse_int("template_card_index") if "template_card_index" in seen else None,
        system_prompt=parse_id("sys_prompt") if "sys_prompt" in seen else None,
        num_demos=parse_int("num_demos") if "num_demos" in seen else 0,
        demos_pool_size=parse_int("demos_pool_size") if "demos_pool_size" in seen else DEFAULT_DEMOS_POOL_SIZE,
        seed=parse_int("seed") if "seed" in seen else DEFAULT_SEED,
        loader_limit=parse_int("loader_limit") if "loader_limit" in seen else None,
        max_instances=parse_int("max_instances") if "max_instances" in seen else None,
        augmentors=augmentors,
    )


def render_recipe(spec: RecipeSpec) -> str:
    """Canonical one-line form: fixed key order, defaults omitted."""
    pairs: list[str] = [f"card={spec.card}"]
    if spec.template is not None:
        pairs.append(f"template={spec.template}")
    if spec.template_card_index is not None:
        pairs.append(f"template_card_index={spec.template_card_index}")
    if spec.system_prompt is not None:
        pairs.append(f"sys_prompt={spec.system_prompt}")
    pairs.append(f"format={spec.format}")
    if spec.num_demos != 0:
        pairs.append(f"num_demos={spec.num_demos}")
    if spec.demos_pool_size != DEFAULT_DEMOS_POOL_SIZE:
        pairs.append(f"demos_pool_size={spec.demos_pool_size}")
    if spec.seed != DEFAULT_SEED:
        pairs.append(f"seed={spec.seed}")
    if spec.loader_limit is not None:
        pairs.append(f"loader_limit={spec.loader_limit}")
    if spec.max_instances is not None:
        pairs.append(f"max_instances={spec.max_instances}")
    if spec.augmentors:
        pairs.append("augmentors=" + "+".join(str(a) for a in spec.augmentors))
    return ",".join(pairs)


def spec_from_artifact(artifact: Artifact) -> RecipeSpec:
    """Build a RecipeSpec from a stored recipe artifact.

    Recipe artifacts carry the same keys as the textual DSL, except that
    ``system_prompt`` is spelled out and ``augmentors`` is a JSON list.
    """
    if artifact.kind != "recipe":
        raise RecipeValidationError(f"{artifact.id} is a {artifact.kind}, not a recipe")
    body = artifact.body
    where = str(artifact.id)
    allowed = {"type", "ref", "description", "card", "template", "template_card_index",
               "system_prompt", "format", "num_demos", "demos_pool_size", "seed",
               "loader_limit", "max_instances", "augmentors"}
    unknown = set(body) - allowed
    if unknown:
        raise RecipeValidationError(f"{where}: unknown keys {sorted(unknown)}")

    def want_id(key: str) -> ArtifactId | None:
        value = body.get(key)
        if value is None:
            return None
        if not isinstance(value, str):
            raise RecipeValidationError(f"{where}: {key!r} must be an artifact id string")
        return ArtifactId.parse(value)

    def want_int(key: str, default: int | None) -> int | None:
        value = body.get(key, default)
        if value is None:
            return None
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise RecipeValidationError(f"{where}: {key!r} must be a non-negative integer")
        return value

    card = want_id("card")
    fmt = want_id("format")
    if card is None or fmt is None:
        raise RecipeValidationError(f"{where}: recipe artifacts need 'card' and 'format'")
    template = want_id("template")
    template_index = want_int("template_card_index", None)
    if (template is None) == (template_index is None):
        raise RecipeValidationError(
            f"{where}: exactly one of 'template' and 'template_card_index' is required"
        )
    augmentors_raw = body.get("augmentors", [])
    if not isinstance(augmentors_raw, list):
        raise RecipeValidationError(f"{where}: 'augmentors' must be a list")
    num_demos = want_int("num_demos", 0)
    demos_pool_size = want_int("demos_pool_size", DEFAULT_DEMOS_POOL_SIZE)
    seed = want_int("seed", DEFAULT_SEED)
    assert num_demos is not None and demos_pool_size is not None and seed is not None
    return RecipeSpec(
        card=card,
        format=fmt,
        template=template,
        template_card_index=template_index,
        system_prompt=want_id("system_prompt"),
        num_demos=num_demos,
        demos_pool_size=demos_pool_size,
        seed=seed,
        loader_limit=want_int("loader_limit", None),
        max_instances=want_int("max_instances", None),
        augmentors=tuple(ArtifactId.parse(a) for a in augmentors_raw),
    )


@dataclass(frozen=True)
class Recipe:
    """A RecipeSpec bound to concrete artifacts."""

    spec: RecipeSpec
    card: DataTaskCard
    task: Task
    template: Template
    format: Format
    system_prompt: SystemPrompt | None
    augmentors: tuple[Augmentor, ...]
    postprocessors: tuple[Postprocessor, ...]
    metric_artifacts: tuple[Artifact, ...]
    closure: tuple[Artifact, ...] = field(repr=False)
    roots: CatalogRoots = field(repr=False)

    @property
    def seed(self) -> int:
        return self.spec.seed

    @property
    def num_demos(self) -> int:
        return self.spec.num_demos


def _expect_kind(artifact: Artifact, kind: str, slot: str) -> Artifact:
    if artifact.kind != kind:
        raise RecipeValidationError(
            f"recipe key {slot!r} must name a {kind}, but {artifact.id} is a {artifact.kind}"
        )
    return artifact


def resolve_recipe(spec: RecipeSpec, roots: CatalogRoots) -> Recipe:
    """Bind a spec against catalog roots and cross-validate the parts."""
    closure: dict[str, Artifact] = {}

    def resolve(artifact_id: ArtifactId) -> Artifact:
        artifact = roots.resolve(artifact_id)
        closure[str(artifact.id)] = artifact
        return artifact

    card = parse_card(_expect_kind(resolve(spec.card), "card", "card"))
    task = parse_task(_expect_kind(resolve(card.task_ref), "task", "card.task"))

    if spec.template is not None:
        template_id = spec.template
    else:
        index = spec.template_card_index or 0
        if not card.template_ids:
            raise RecipeValidationError(
                f"recipe asks for template_card_index={index} but {card.id} lists no templates"
            )
        if index >= len(card.template_ids):
            raise RecipeValidationError(
                f"template_card_index={index} is out of range; {card.id} lists "
                f"{len(card.template_ids)} template(s)"
            )
        template_id = card.template_ids[index]
    template = parse_template(_expect_kind(resolve(template_id), "template", "template"))
    check_template_fields(template, task)

    fmt = parse_format(_expect_kind(resolve(spec.format), "format", "format"))
    system_prompt = None
    if spec.system_prompt is not None:
        system_prompt = parse_system_prompt(
            _expect_kind(resolve(spec.system_prompt), "system_prompt", "sys_prompt")
        )

    layout_slots = set(placeholder_names(fmt.layout))
    if spec.num_demos > 0 and "demos" not in layout_slots:
        raise RecipeValidationError(
            f"num_demos={spec.num_demos} but format {fmt.id} has no {{demos}} slot"
        )
    if system_prompt is not None and "system_prompt" not in layout_slots:
        raise RecipeValidationError(
            f"sys_prompt is set but format {fmt.id} has no {{system_prompt}} slot"
        )

    augmentors = tuple(
        parse_augmentor(_expect_kind(resolve(a), "augmentor", "augmentors")) for a in spec.augmentors
    )
    for aug in augmentors:
        if aug.kind == "demo_label_noise":
            if spec.num_demos == 0:
                raise RecipeValidationError(f"{aug.id} noises demo targets but num_demos=0")
            if not task.label_options:
                raise RecipeValidationError(
                    f"{aug.id} needs label_options on task {task.id}"
                )

    postprocessors = tuple(
        parse_postprocessor(_expect_kind(resolve(p), "processor", "template.postprocessors"))
        for p in template.postprocessor_ids
    )
    validate_chain(list(postprocessors), where=str(template.id))

    metric_artifacts = tuple(
        _expect_kind(resolve(m), "metric", "task.metrics") for m in task.metric_ids
    )

    if spec.demos_pool_size <= 0:
        raise RecipeValidationError(f"demos_pool_size must be positive, got {spec.demos_pool_size}")
    if spec.num_demos > spec.demos_pool_size:
        raise RecipeValidationError(
            f"num_demos={spec.num_demos} exceeds demos_pool_size={spec.demos_pool_size}"
        )
    if spec.loader_limit is not None and spec.loader_limit <= 0:
        raise RecipeValidationError(f"loader_limit must be positive, got {spec.loader_limit}")
    if spec.max_instances is not None and spec.max_instances <= 0:
        raise RecipeValidationError(f"max_instances must be positive, got {spec.max_instances}")

    ordered_closure = tuple(closure[key] for key in sorted(closure))
    return Recipe(
        spec=spec,
        card=card,
        task=task,
        template=template,
        format=fmt,
        system_prompt=system_prompt,
        augmentors=augmentors,
        postprocessors=postprocessors,
        metric_artifacts=metric_artifacts,
        closure=ordered_closure,
        roots=roots,
    )
