"""Instance streams: loaders and the per-split wrangling operator algebra.

An Instance is a flat field->value map. Values are text, integer, real,
boolean, list_of_text or list_of_real, and always finite. A MultiStream maps
split names to lazily re-iterable instance sequences; operators transform
streams one instance at a time except for shuffle and split_random, which
materialize the split they touch and re-emit it in a seed-deterministic order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator

from .errors import LoaderError, OperatorError
from .rng import KeyedStream, hash64

logger = logging.getLogger("promptforge")

SPLIT_NAMES = ("train", "validation", "test")

_FIELD_RE = re.compile(r"^[a-z0-9_]+$")

SEMANTIC_TYPES = ("text", "integer", "real", "boolean", "list_of_text", "list_of_real")

Instance = dict[str, Any]
Stream = Callable[[], Iterator[Instance]]


def semantic_type(value: Any) -> str:
    """The semantic type name of a value, or raise ValueError."""
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, str):
        return "text"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError("non-finite real value")
        return "real"
    if isinstance(value, list):
        if all(isinstance(v, str) for v in value):
            return "list_of_text"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            for v in value:
                if isinstance(v, float) and not math.isfinite(v):
                    raise ValueError("non-finite real value in list")
            return "list_of_real"
        raise ValueError("lists must be all-text or all-numeric")
    raise ValueError(f"unsupported value type: {type(value).__name__}")


def render_value(value: Any) -> str:
    """Text rendering of a value: reals use the minimal round-trip decimal."""
    kind = semantic_type(value)
    if kind == "text":
        return value
    if kind == "boolean":
        return "true" if value else "false"
    if kind == "integer":
        return str(value)
    if kind == "real":
        return repr(float(value))
    if kind == "list_of_text":
        return ", ".join(value)
    return ", ".join(repr(float(v)) for v in value)


def check_instance(instance: Instance, where: str) -> Instance:
    """Validate field names and value domain; returns the instance."""
    for name, value in instance.items():
        if not _FIELD_RE.match(name):
            raise LoaderError(f"{where}: invalid field name {name!r}")
        try:
            semantic_type(value)
        except ValueError as exc:
            raise LoaderError(f"{where}: field {name!r}: {exc}") from exc
    return instance


class MultiStream:
    """Mapping of split name -> re-iterable lazy instance sequence."""

    def __init__(self, splits: dict[str, Stream]):
        self.splits = splits

    def iter_split(self, split: str) -> Iterator[Instance]:
        if split not in self.splits:
            raise OperatorError(f"unknown split {split!r}; have {sorted(self.splits)}")
        return self.splits[split]()

    def materialize(self, split: str) -> list[Instance]:
        return list(self.iter_split(split))

    def counts(self) -> dict[str, int]:
        return {name: sum(1 for _ in stream()) for name, stream in self.splits.items()}

    @classmethod
    def from_lists(cls, data: dict[str, list[Instance]]) -> "MultiStream":
        def make(rows: list[Instance]) -> Stream:
            return lambda: iter(rows)

        return cls({name: make(rows) for name, rows in data.items()})


def _reject_constant(name: str):
    raise LoaderError(f"non-finite JSON constant {name!r} is not a valid field value")


def _coerce_json_row(obj: Any, where: str) -> Instance:
    if not isinstance(obj, dict):
        raise LoaderError(f"{where}: each line must be a JSON object")
    return check_instance(obj, where)


def _jsonl_stream(path: Path, limit: int | None) -> Stream:
    def gen() -> Iterator[Instance]:
        type_seen: dict[str, str] = {}
        count = 0
        try:
            handle = path.open("r", encoding="utf-8")
        except OSError as exc:
            raise LoaderError(f"cannot read {path}: {exc}") from exc
        with handle:
            for lineno, line in enumerate(handle, start=1):
                if limit is not None and count >= limit:
                    break
                if not line.strip():
                    continue
                where = f"{path}:{lineno}"
                try:
                    obj = json.loads(line, parse_constant=_reject_constant)
                except json.JSONDecodeError as exc:
                    raise LoaderError(f"{where}: invalid JSON: {exc}") from exc
                row = _coerce_json_row(obj, where)
                _track_types(row, type_seen, where)
                count += 1
                yield row
        if count == 0:
            logger.warning("loader: %s produced zero instances", path)

    return gen


def _csv_stream(path: Path, limit: int | None) -> Stream:
    def gen() -> Iterator[Instance]:
        type_seen: dict[str, str] = {}
        count = 0
        try:
            handle = path.open("r", encoding="utf-8", newline="")
        except OSError as exc:
            raise LoaderError(f"cannot read {path}: {exc}") from exc
        with handle:
            reader = csv.reader(handle, delimiter=",", quotechar='"')
            try:
                header = next(reader)
            except StopIteration:
                logger.warning("loader: %s is empty (no header row)", path)
                return
            for name in header:
                if not _FIELD_RE.match(name):
                    raise LoaderError(f"{path}: invalid CSV header field {name!r}")
            for rowno, row in enumerate(reader, start=2):
                if limit is not None and count >= limit:
                    break
                if len(row) != len(header):
                    raise LoaderError(
                        f"{path}:{rowno}: ragged row: {len(row)} cells, header has {len(header)}"
                    )
                instance = dict(zip(header, row))
                _track_types(instance, type_seen, f"{path}:{rowno}")
                count += 1
                yield instance
        if count == 0:
            logger.warning("loader: %s produced zero instances", path)

    return gen


def _track_types(row: Instance, seen: dict[str, str], where: str) -> None:
    for name, value in row.items():
        kind = semantic_type(value)
        prior = seen.setdefault(name, kind)
        if prior != kind:
            raise LoaderError(f"{where}: field {name!r} is {kind} but earlier rows had {prior}")


def load(loader_spec: dict, base_dir: Path | None = None, loader_limit: int | None = None) -> MultiStream:
    """Build a MultiStream from a loader spec (local_jsonl | local_csv | inline).

    Relative file paths resolve against base_dir (the catalog root that
    supplied the card). ``loader_limit`` truncates each split after N rows.
    """
    kind = loader_spec.get("type")
    if kind == "inline":
        data = loader_spec.get("instances")
        if not isinstance(data, dict):
            raise LoaderError("inline loader needs an 'instances' map of split -> rows")
        splits: dict[str, Stream] = {}
        for split, rows in data.items():
            _check_split_name(split)
            checked = [check_instance(dict(r), f"inline.{split}[{i}]") for i, r in enumerate(rows)]
            trimmed = checked[:loader_limit] if loader_limit is not None else checked
            splits[split] = (lambda rows_: lambda: iter(rows_))(trimmed)
        return MultiStream(splits)

    if kind not in ("local_jsonl", "local_csv"):
        raise LoaderError(f"unknown loader type {kind!r}")
    make_stream = _jsonl_stream if kind == "local_jsonl" else _csv_stream

    def resolve(p: str) -> Path:
        path = Path(p)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        return path

    split_files = loader_spec.get("split_files")
    if split_files is not None:
        splits = {}
        for split, file_path in split_files.items():
            _check_split_name(split)
            splits[split] = make_stream(resolve(file_path), loader_limit)
        return MultiStream(splits)

    single = loader_spec.get("file")
    if single is None:
        raise LoaderError("loader needs 'split_files' or a single 'file'")
    split = loader_spec.get("split", "train")
    _check_split_name(split)
    return MultiStream({split: make_stream(resolve(single), loader_limit)})


def _check_split_name(split: str) -> None:
    if split not in SPLIT_NAMES:
        raise LoaderError(f"unknown split name {split!r}; expected one of {SPLIT_NAMES}")


# --- operators ---------------------------------------------------------------

OPERATOR_TYPES = (
    "rename_fields",
    "copy_field",
    "set_literal",
    "map_values",
    "filter_equals",
    "cast",
    "split_random",
    "shuffle",
    "limit",
)


@dataclass(frozen=True)
class OperatorSpec:
    type: str
    params: dict

    @classmethod
    def from_dict(cls, raw: dict, where: str = "operator") -> "OperatorSpec":
        if not isinstance(raw, dict) or "type" not in raw:
            raise OperatorError(f"{where}: operator spec must be an object with a 'type' field")
        op_type = raw["type"]
        params = {k: v for k, v in raw.items() if k != "type"}
        spec = cls(type=op_type, params=params)
        validate_operator(spec, where)
        return spec

    def to_dict(self) -> dict:
        return {"type": self.type, **self.params}


def validate_operator(op: OperatorSpec, where: str = "operator") -> None:
    """Check operator parameters up front, before any instance flows."""
    p = op.params
    if op.type == "rename_fields":
        mapping = p.get("mapping")
        if not isinstance(mapping, dict) or not mapping:
            raise OperatorError(f"{where}: rename_fields needs a non-empty 'mapping'")
        targets = list(mapping.values())
        if len(set(targets)) != len(targets):
            raise OperatorError(f"{where}: rename_fields maps two fields to the same name")
    elif op.type == "copy_field":
        if not p.get("from") or not p.get("to"):
            raise OperatorError(f"{where}: copy_field needs 'from' and 'to'")
    elif op.type == "set_literal":
        if "field" not in p or "value" not in p:
            raise OperatorError(f"{where}: set_literal needs 'field' and 'value'")
        try:
            semantic_type(p["value"])
        except ValueError as exc:
            raise OperatorError(f"{where}: set_literal value: {exc}") from exc
    elif op.type == "map_values":
        if "field" not in p or not isinstance(p.get("mapping"), dict):
            raise OperatorError(f"{where}: map_values needs 'field' and a 'mapping' object")
    elif op.type == "filter_equals":
        if "field" not in p or "value" not in p:
            raise OperatorError(f"{where}: filter_equals needs 'field' and 'value'")
    elif op.type == "cast":
        if p.get("to") not in ("real", "integer", "text", "boolean"):
            raise OperatorError(f"{where}: cast 'to' must be real|integer|text|boolean")
        if "field" not in p:
            raise OperatorError(f"{where}: cast needs 'field'")
    elif op.type == "split_random":
        ratios = p.get("ratios")
        if not isinstance(ratios, dict) or not ratios:
            raise OperatorError(f"{where}: split_random needs a 'ratios' map")
        for split in ratios:
            _check_split_name(split)
        total = math.fsum(ratios.values())
        if abs(total - 1.0) > 1e-9:
            raise OperatorError(f"{where}: split_random ratios sum to {total!r}, expected 1.0")
        _check_split_name(p.get("from_split", "train"))
    elif op.type == "shuffle":
        if "split" in p:
            _check_split_name(p["split"])
    elif op.type == "limit":
        n = p.get("n")
        if not isinstance(n, int) or isinstance(n, bool) or n < 0:
            raise OperatorError(f"{where}: limit needs a non-negative integer 'n'")
    else:
        raise OperatorError(f"{where}: unknown operator type {op.type!r}")


def _need_field(instance: Instance, field: str, ctx: str) -> Any:
    if field not in instance:
        raise OperatorError(f"{ctx}: missing field {field!r}")
    return instance[field]


def _cast_value(value: Any, to: str, ctx: str) -> Any:
    kind = semantic_type(value)
    if kind == to or (to == "text" and kind == "text"):
        return value
    if to == "text":
        return render_value(value)
    if to == "real":
        if kind in ("integer",):
            return float(value)
        if kind == "text":
            try:
                result = float(value.strip())
            except ValueError as exc:
                raise OperatorError(f"{ctx}: cannot cast {value!r} to real") from exc
            if not math.isfinite(result):
                raise OperatorError(f"{ctx}: cast of {value!r} is not finite")
            return result
        raise OperatorError(f"{ctx}: cannot cast {kind} to real")
    if to == "integer":
        if kind == "real":
            if float(value).is_integer():
                return int(value)
            raise OperatorError(f"{ctx}: real {value!r} is not integral")
        if kind == "text":
            try:
                return int(value.strip(), 10)
            except ValueError as exc:
                raise OperatorError(f"{ctx}: cannot cast {value!r} to integer") from exc
        raise OperatorError(f"{ctx}: cannot cast {kind} to integer")
    if to == "boolean":
        if kind == "text" and value.strip().lower() in ("true", "false"):
            return value.strip().lower() == "true"
        raise OperatorError(f"{ctx}: cannot cast {value!r} to boolean")
    raise OperatorError(f"{ctx}: unsupported cast target {to!r}")


def _map_per_instance(op: OperatorSpec, label: str) -> Callable[[Instance, str], Instance | None]:
    """Per-instance transform for the pointwise operator kinds."""
    p = op.params

    if op.type == "rename_fields":
        mapping = p["mapping"]

        def rename(instance: Instance, ctx: str) -> Instance:
            for old in mapping:
                _need_field(instance, old, ctx)
            for old, new in mapping.items():
                if new in instance and new not in mapping:
                    raise OperatorError(f"{ctx}: rename target {new!r} already exists")
            return {mapping.get(name, name): value for name, value in instance.items()}

        return rename

    if op.type == "copy_field":
        src, dst = p["from"], p["to"]

        def copy(instance: Instance, ctx: str) -> Instance:
            value = _need_field(instance, src, ctx)
            if dst in instance:
                raise OperatorError(f"{ctx}: copy target {dst!r} already exists")
            out = dict(instance)
            out[dst] = value
            return out

        return copy

    if op.type == "set_literal":
        field, value = p["field"], p["value"]

        def set_literal(instance: Instance, ctx: str) -> Instance:
            out = dict(instance)
            out[field] = value
            return out

        return set_literal

    if op.type == "map_values":
        field, mapping = p["field"], p["mapping"]
        has_default = "default" in p
        default = p.get("default")

        def map_values(instance: Instance, ctx: str) -> Instance:
            value = _need_field(instance, field, ctx)
            key = value if isinstance(value, str) else render_value(value)
            if key in mapping:
                replacement = mapping[key]
            elif has_default:
                replacement = default
            else:
                raise OperatorError(f"{ctx}: map_values has no entry for {key!r} and no default")
            out = dict(instance)
            out[field] = replacement
            return out

        return map_values

    if op.type == "filter_equals":
        field, value = p["field"], p["value"]

        def filter_equals(instance: Instance, ctx: str) -> Instance | None:
            current = _need_field(instance, field, ctx)
            return instance if current == value else None

        return filter_equals

    if op.type == "cast":
        field, to = p["field"], p["to"]

        def cast(instance: Instance, ctx: str) -> Instance:
            value = _need_field(instance, field, ctx)
            out = dict(instance)
            out[field] = _cast_value(value, to, ctx)
            return out

        return cast

    raise OperatorError(f"{label}: operator {op.type!r} is not pointwise")


def _largest_remainder_sizes(n: int, ratios: dict[str, float]) -> dict[str, int]:
    """Exact apportionment of n by ratios; remainders favor declared order."""
    items = list(ratios.items())
    raw = [n * r for _, r in items]
    base = [math.floor(x) for x in raw]
    leftover = n - sum(base)
    order = sorted(range(len(items)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return {name: size for (name, _), size in zip(items, base)}


def apply_operator(op: OperatorSpec, stream: MultiStream, seed: int, label: str = "op") -> MultiStream:
    """Apply one operator to every split (or the split it names)."""
    validate_operator(op, label)

    if op.type == "limit":
        n = op.params["n"]
        target = op.params.get("split")

        def limited(src: Stream) -> Stream:
            def gen() -> Iterator[Instance]:
                it = src()
                for i, instance in enumerate(it):
                    if i >= n:
                        break
                    yield instance

            return gen

        return MultiStream(
            {
                name: (limited(src) if target is None or name == target else src)
                for name, src in stream.splits.items()
            }
        )

    if op.type == "shuffle":
        target = op.params.get("split")

        def shuffled(name: str, src: Stream) -> Stream:
            def gen() -> Iterator[Instance]:
                rows = list(src())
                order = KeyedStream(hash64(seed, "shuffle", name)).shuffled_indices(len(rows))
                for i in order:
                    yield rows[i]

            return gen

        return MultiStream(
            {
                name: (shuffled(name, src) if target is None or name == target else src)
                for name, src in stream.splits.items()
            }
        )

    if op.type == "split_random":
        ratios: dict[str, float] = op.params["ratios"]
        from_split = op.params.get("from_split", "train")
        if from_split not in stream.splits:
            raise OperatorError(f"{label}: split_random source split {from_split!r} not present")
        for target in ratios:
            if target != from_split and target in stream.splits:
                raise OperatorError(f"{label}: split_random target {target!r} already exists")

        def partition() -> dict[str, list[Instance]]:
            rows = list(stream.splits[from_split]())
            sizes = _largest_remainder_sizes(len(rows), ratios)
            order = KeyedStream(hash64(seed, "split_random", from_split)).shuffled_indices(len(rows))
            parts: dict[str, list[Instance]] = {}
            cursor = 0
            for name in ratios:
                take = sizes[name]
                picked = sorted(order[cursor : cursor + take])
                parts[name] = [rows[i] for i in picked]
                cursor += take
            return parts

        def part_stream(name: str) -> Stream:
            return lambda: iter(partition()[name])

        splits = {n: s for n, s in stream.splits.items() if n != from_split}
        for name in ratios:
            splits[name] = part_stream(name)
        return MultiStream(splits)

    transform = _map_per_instance(op, label)

    def mapped(name: str, src: Stream) -> Stream:
        def gen() -> Iterator[Instance]:
            for i, instance in enumerate(src()):
                ctx = f"{label} {op.type}: instance {i}"
                out = transform(instance, ctx)
                if out is not None:
                    yield out

        return gen

    return MultiStream({name: mapped(name, src) for name, src in stream.splits.items()})


def pipe(ops: list[OperatorSpec], stream: MultiStream, seed: int) -> MultiStream:
    """Left-to-right lazy composition; errors name the failing op's position."""
    current = stream
    for i, op in enumerate(ops):
        current = apply_operator(op, current, seed, label=f"op[{i}]")
    return current
