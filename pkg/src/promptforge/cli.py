"""Command-line interface.

Exit codes: 0 success, 2 user error (bad flags, unknown artifacts, malformed
recipes or files), 1 internal error. All commands accept repeatable
``--catalog`` flags; without them the PROMPTFORGE_CATALOGS environment
variable supplies the roots.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path

from . import __version__
from .catalog import KIND_BY_NAMESPACE, ArtifactId, CatalogRoots, roots_from_env
from .errors import PromptForgeError
from .evaluate import BootstrapConfig, evaluate
from .pipeline import export_jsonl, import_jsonl, prepare_text


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--catalog",
        action="append",
        default=None,
        metavar="DIR",
        help="catalog root directory; repeatable, later roots shadow earlier ones "
        "(overrides PROMPTFORGE_CATALOGS)",
    )
    parser.add_argument("--json", action="store_true", help="emit machine-readable JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptforge",
        description="Declarative preparation and evaluation of text datasets for language models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_catalog = sub.add_parser("catalog", help="inspect catalog artifacts")
    catalog_sub = p_catalog.add_subparsers(dest="catalog_command", required=True)
    p_list = catalog_sub.add_parser("list", help="list artifact ids")
    _common_flags(p_list)
    p_list.add_argument(
        "--kind",
        default=None,
        metavar="NAMESPACE",
        help="restrict to one namespace (e.g. cards, templates, formats)",
    )
    p_show = catalog_sub.add_parser("show", help="print one artifact as canonical JSON")
    _common_flags(p_show)
    p_show.add_argument("id", help="artifact id, e.g. cards.stsb")

    p_prepare = sub.add_parser("prepare", help="run a recipe and export prepared instances")
    _common_flags(p_prepare)
    p_prepare.add_argument("--recipe", required=True, help="recipe string (key=value pairs)")
    p_prepare.add_argument("--out", required=True, metavar="FILE", help="output JSONL path")
    p_prepare.add_argument("--split", default=None, help="export only this split")
    p_prepare.add_argument("--seed", type=int, default=None, help="override the recipe seed")
    p_prepare.add_argument(
        "--max-instances", type=int, default=None, help="cap instances per split"
    )

    p_eval = sub.add_parser("evaluate", help="score predictions against a prepared dataset")
    _common_flags(p_eval)
    p_eval.add_argument("--dataset", required=True, metavar="FILE", help="prepared JSONL path")
    p_eval.add_argument(
        "--predictions",
        required=True,
        metavar="FILE",
        help="predictions file: .jsonl with a 'prediction' field per line, otherwise one raw line per instance",
    )
    p_eval.add_argument("--out", default=None, metavar="FILE", help="write the full report JSON here")
    p_eval.add_argument("--resamples", type=int, default=1000, help="bootstrap resamples (0 disables CIs)")
    p_eval.add_argument("--confidence", type=float, default=0.95, help="CI confidence level")
    p_eval.add_argument("--seed", type=int, default=42, help="bootstrap seed")

    p_serve = sub.add_parser("serve", help="serve the HTTP API")
    _common_flags(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8421)
    p_serve.add_argument(
        "--addr", default=None, metavar="HOST:PORT", help="shorthand for --host/--port"
    )

    return parser


def _roots(args: argparse.Namespace) -> CatalogRoots:
    return roots_from_env(args.catalog)


def cmd_catalog_list(args: argparse.Namespace) -> int:
    roots = _roots(args)
    if args.kind is not None:
        if args.kind not in KIND_BY_NAMESPACE:
            raise PromptForgeError(
                f"unknown kind {args.kind!r}; expected one of "
                f"{', '.join(sorted(KIND_BY_NAMESPACE))}",
                code="bad_kind",
            )
        ids = [str(i) for i in roots.list_by_kind(KIND_BY_NAMESPACE[args.kind])]
    else:
        ids = roots.ids()
    if args.json:
        print(json.dumps(ids, indent=2))
    else:
        for artifact_id in ids:
            print(artifact_id)
    return 0


def cmd_catalog_show(args: argparse.Namespace) -> int:
    roots = _roots(args)
    artifact = roots.lookup(ArtifactId.parse(args.id))
    sys.stdout.write(artifact.canonical())
    return 0


def cmd_prepare(args: argparse.Namespace) -> int:
    roots = _roots(args)
    prepared = prepare_text(
        args.recipe, roots, seed=args.seed, max_instances=args.max_instances
    )
    if args.split is not None:
        if args.split not in prepared.instances:
            raise PromptForgeError(
                f"split {args.split!r} not in prepared dataset; "
                f"have {sorted(prepared.instances)}",
                code="bad_split",
            )
        instances = prepared.instances[args.split]
    else:
        instances = prepared.all_instances()
    count = export_jsonl(instances, args.out)
    summary = {
        "out": str(args.out),
        "written": count,
        "counts": prepared.counts(),
        "recipe_fingerprint": prepared.recipe_fingerprint,
        "dropped_fields": prepared.drop_report.dropped,
    }
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        per_split = ", ".join(f"{s}={n}" for s, n in prepared.counts().items())
        print(f"wrote {count} instance(s) to {args.out} ({per_split})")
        print(f"recipe_fingerprint={prepared.recipe_fingerprint}")
    return 0


def _read_predictions(path: Path) -> list[str]:
    if not path.exists():
        raise PromptForgeError(f"predictions file not found: {path}", code="missing_file")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        out: list[str] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PromptForgeError(f"{path}:{lineno}: invalid JSON: {exc}", code="bad_predictions")
            if not isinstance(obj, dict) or not isinstance(obj.get("prediction"), str):
                raise PromptForgeError(
                    f"{path}:{lineno}: expected an object with a string 'prediction' field",
                    code="bad_predictions",
                )
            out.append(obj["prediction"])
        return out
    return text.splitlines()


def cmd_evaluate(args: argparse.Namespace) -> int:
    roots = _roots(args)
    instances = import_jsonl(args.dataset)
    predictions = _read_predictions(Path(args.predictions))
    config = BootstrapConfig(
        n_resamples=args.resamples, confidence_level=args.confidence, seed=args.seed
    )
    report = evaluate(instances, predictions, roots, config)
    payload = report.to_json_dict()
    if args.out:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))
    else:
        print(f"n={report.n} parse_failure_rate={report.parse_failure_rate:.3f}")
        for name, entry in sorted(report.scores.items()):
            line = f"{name} score={entry.score:.6f}"
            if entry.ci_low is not None and entry.ci_high is not None:
                line += f" ci=[{entry.ci_low:.6f}, {entry.ci_high:.6f}]"
            if entry.flags:
                line += f" flags={','.join(entry.flags)}"
            print(line)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    host, port = args.host, args.port
    if args.addr is not None:
        head, sep, tail = args.addr.rpartition(":")
        if not sep or not head or not tail.isdigit():
            raise PromptForgeError(
                f"--addr must look like host:port, got {args.addr!r}", code="bad_addr"
            )
        host, port = head, int(tail)
    roots = _roots(args)
    app = create_app(roots)
    # uvicorn exits by itself on a failed bind; probe first so the documented
    # exit-2 contract holds for the common port-in-use case.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        raise PromptForgeError(f"cannot bind {host}:{port}: {exc}", code="bind_failed")
    finally:
        probe.close()
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    except OSError as exc:
        raise PromptForgeError(f"cannot bind {host}:{port}: {exc}", code="bind_failed")
    return 0


_COMMANDS = {
    ("catalog", "list"): cmd_catalog_list,
    ("catalog", "show"): cmd_catalog_show,
    ("prepare", None): cmd_prepare,
    ("evaluate", None): cmd_evaluate,
    ("serve", None): cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _COMMANDS[(args.command, getattr(args, "catalog_command", None))]
    try:
        return handler(args)
    except PromptForgeError as exc:
        location = f" ({exc.location})" if exc.location else ""
        print(f"error: {exc.message}{location}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
