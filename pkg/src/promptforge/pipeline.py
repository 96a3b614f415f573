"""End-to-end preparation: recipe in, prompt-ready instances out.

Stage order is fixed: load, card operators, schema check, pre-template
augmentors, verbalization, demo-pool extraction, demo-target noising, demo
sampling, post-template augmentors, format rendering. Every random choice
draws from a stream keyed on the recipe seed and the site where the choice
happens, so a recipe string plus a catalog pins every output byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import format as fmt_mod
from .augment import augment_text, noise_demo_labels
from .catalog import CatalogRoots, canonical_json
from .errors import PipelineError
from .format import DemoPool
from .recipe import (
    Recipe,
    RecipeSpec,
    parse_recipe,
    render_recipe,
    resolve_recipe,
    spec_from_artifact,
)
from .rng import hash64
from .stream_ops import SPLIT_NAMES, Instance
from .task_card import DropReport, standardize
from .template import VerbalizedInstance, verbalize

_JSON_FIELDS = (
    "source",
    "target",
    "references",
    "postprocessor_ids",
    "metric_ids",
    "split",
    "index",
    "task_data",
    "recipe_fingerprint",
)


@dataclass(frozen=True)
class PreparedInstance:
    source: str
    target: str
    references: tuple[str, ...]
    postprocessor_ids: tuple[str, ...]
    metric_ids: tuple[str, ...]
    split: str
    index: int
    task_data: dict
    recipe_fingerprint: str

    def to_json_dict(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "references": list(self.references),
            "postprocessor_ids": list(self.postprocessor_ids),
            "metric_ids": list(self.metric_ids),
            "split": self.split,
            "index": self.index,
            "task_data": self.task_data,
            "recipe_fingerprint": self.recipe_fingerprint,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PreparedInstance":
        missing = [name for name in _JSON_FIELDS if name not in obj]
        if missing:
            raise PipelineError(f"prepared instance is missing fields {missing}")
        return cls(
            source=obj["source"],
            target=obj["target"],
            references=tuple(obj["references"]),
            postprocessor_ids=tuple(obj["postprocessor_ids"]),
            metric_ids=tuple(obj["metric_ids"]),
            split=obj["split"],
            index=obj["index"],
            task_data=obj["task_data"],
            recipe_fingerprint=obj["recipe_fingerprint"],
        )


@dataclass
class PreparedDataset:
    instances: dict[str, list[PreparedInstance]]
    demo_pool: DemoPool | None
    drop_report: DropReport
    recipe_fingerprint: str
    recipe: Recipe = field(repr=False)

    def counts(self) -> dict[str, int]:
        return {split: len(items) for split, items in self.instances.items()}

    def all_instances(self) -> list[PreparedInstance]:
        out: list[PreparedInstance] = []
        for split in SPLIT_NAMES:
            out.extend(self.instances.get(split, []))
        return out


def _loader_data_files(loader_spec: dict, base_dir: Path) -> list[tuple[str, Path]]:
    kind = loader_spec.get("type")
    if kind == "inline":
        return []
    files: list[tuple[str, Path]] = []
    if "split_files" in loader_spec:
        for _, rel in sorted(loader_spec["split_files"].items()):
            files.append((rel, base_dir / rel))
    elif "file" in loader_spec:
        rel = loader_spec["file"]
        files.append((rel, base_dir / rel))
    return files


def compute_fingerprint(recipe: Recipe) -> str:
    """Hash of everything that determines the output: canonical recipe string,
    the canonical bytes of every artifact in the resolution closure, and the
    bytes of every data file the loader reads."""
    artifact_hashes = {
        str(art.id): hashlib.sha256(art.canonical().encode("utf-8")).hexdigest()
        for art in recipe.closure
    }
    data_hashes = {}
    for rel, path in _loader_data_files(recipe.card.loader_spec, recipe.card.source_root):
        try:
            data_hashes[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
        except OSError as exc:
            raise PipelineError(f"cannot hash data file {path}: {exc}") from exc
    doc = {
        "recipe": render_recipe(recipe.spec),
        "artifacts": artifact_hashes,
        "data": data_hashes,
    }
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def _apply_pre_template(recipe: Recipe, instance: Instance, split: str, index: int) -> Instance:
    augs = [a for a in recipe.augmentors if a.target == "pre_template"]
    if not augs:
        return instance
    out = dict(instance)
    text_fields = [name for name, kind in recipe.task.input_fields.items() if kind == "text"]
    for aug in augs:
        for field_name in text_fields:
            key = hash64(recipe.seed, "aug_pre", str(aug.id), split, index, field_name)
            out[field_name] = augment_text(aug, out[field_name], key)
    return out


def _apply_post_template(recipe: Recipe, body: str, split: str, index: int) -> str:
    for aug in recipe.augmentors:
        if aug.target != "post_template":
            continue
        key = hash64(recipe.seed, "aug_post", str(aug.id), split, index)
        body = augment_text(aug, body, key)
    return body


def prepare(recipe: Recipe) -> PreparedDataset:
    spec = recipe.spec
    report = DropReport()
    stream = standardize(
        recipe.card, recipe.task, spec.seed, loader_limit=spec.loader_limit, report=report
    )

    verbalized: dict[str, list[VerbalizedInstance]] = {}
    for split in stream.splits:
        items: list[VerbalizedInstance] = []
        for i, instance in enumerate(stream.iter_split(split)):
            instance = _apply_pre_template(recipe, instance, split, i)
            items.append(verbalize(recipe.template, instance, recipe.task))
        verbalized[split] = items

    pool: DemoPool | None = None
    if spec.num_demos > 0:
        train = verbalized.get("train")
        if not train:
            raise PipelineError(
                f"num_demos={spec.num_demos} needs a train split to draw demos from"
            )
        pool, remaining = fmt_mod.build_demo_pool(train, spec.demos_pool_size, spec.seed)
        verbalized["train"] = remaining
        for aug in recipe.augmentors:
            if aug.target == "demo_targets":
                key = hash64(spec.seed, "demo_noise", str(aug.id))
                pool = noise_demo_labels(aug, pool, recipe.task.label_options, key)

    fingerprint = compute_fingerprint(recipe)
    system_text = recipe.system_prompt.text if recipe.system_prompt else None
    postprocessor_ids = tuple(str(p) for p in recipe.template.postprocessor_ids)
    metric_ids = tuple(str(m) for m in recipe.task.metric_ids)

    fixed_demos = None
    if pool is not None and recipe.format.demo_sampling == "fixed":
        fixed_demos = fmt_mod.sample_fixed_demos(pool, spec.num_demos, spec.seed)

    instances: dict[str, list[PreparedInstance]] = {}
    for split in verbalized:
        out: list[PreparedInstance] = []
        for index, verb in enumerate(verbalized[split]):
            if spec.max_instances is not None and index >= spec.max_instances:
                break
            body = _apply_post_template(recipe, verb.body, split, index)
            if pool is not None:
                demos = (
                    fixed_demos
                    if fixed_demos is not None
                    else fmt_mod.sample_demos(pool, spec.num_demos, index, spec.seed)
                )
                demo_pairs = [(d.body, d.target_text) for d in demos]
            else:
                demo_pairs = []
            source = fmt_mod.render(
                recipe.format, system_text, demo_pairs, body, instruction=verb.instruction
            )
            task_data = dict(verb.fields)
            task_data["source"] = (verb.instruction + "\n" + body) if verb.instruction else body
            out.append(
                PreparedInstance(
                    source=source,
                    target=verb.target_text,
                    references=verb.references,
                    postprocessor_ids=postprocessor_ids,
                    metric_ids=metric_ids,
                    split=split,
                    index=index,
                    task_data=task_data,
                    recipe_fingerprint=fingerprint,
                )
            )
        instances[split] = out

    return PreparedDataset(
        instances=instances,
        demo_pool=pool,
        drop_report=report,
        recipe_fingerprint=fingerprint,
        recipe=recipe,
    )


def prepare_text(
    recipe_text: str,
    roots: CatalogRoots,
    *,
    seed: int | None = None,
    max_instances: int | None = None,
) -> PreparedDataset:
    """Parse, resolve, and prepare in one step; the entry point CLI and service share.

    ``recipe_text`` is either a recipe string or the id of a stored recipe
    artifact (``recipes.*``).
    """
    stripped = recipe_text.strip()
    if stripped.startswith("recipes.") and "=" not in stripped:
        spec = spec_from_artifact(roots.resolve(stripped))
    else:
        spec = parse_recipe(recipe_text)
    if seed is not None:
        spec = spec.with_seed(seed)
    if max_instances is not None:
        spec = RecipeSpec(
            card=spec.card,
            format=spec.format,
            template=spec.template,
            template_card_index=spec.template_card_index,
            system_prompt=spec.system_prompt,
            num_demos=spec.num_demos,
            demos_pool_size=spec.demos_pool_size,
            seed=spec.seed,
            loader_limit=spec.loader_limit,
            max_instances=max_instances,
            augmentors=spec.augmentors,
        )
    recipe = resolve_recipe(spec, roots)
    return prepare(recipe)


def export_jsonl(instances: Iterable[PreparedInstance], path: Path | str) -> int:
    """Write one canonical JSON object per line; returns the line count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for instance in instances:
            handle.write(json.dumps(instance.to_json_dict(), ensure_ascii=False, separators=(",", ":")))
            handle.write("\n")
            count += 1
    return count


def dumps_jsonl(instances: Iterable[PreparedInstance]) -> str:
    return "".join(
        json.dumps(inst.to_json_dict(), ensure_ascii=False, separators=(",", ":")) + "\n"
        for inst in instances
    )


def import_jsonl(path: Path | str) -> list[PreparedInstance]:
    out: list[PreparedInstance] = []
    if not Path(path).exists():
        raise PipelineError(f"prepared dataset not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PipelineError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            out.append(PreparedInstance.from_json_dict(obj))
    return out
