"""HTTP API over the preparation and evaluation engine.

Every endpoint calls the same functions the CLI uses, so the two surfaces
cannot drift. Engine errors map to structured 422 responses with
``{"code", "message", "location"}``; bad query parameters are 400s.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .catalog import KIND_BY_NAMESPACE, ArtifactId, CatalogRoots
from .errors import ArtifactNotFoundError, PromptForgeError
from .evaluate import BootstrapConfig, evaluate
from .pipeline import PreparedDataset, prepare_text
from .recipe import parse_recipe, render_recipe

# Hard ceiling on instances returned per request; larger asks are clamped.
MAX_INSTANCES_CAP = 50
DEFAULT_MAX_INSTANCES = 5


class PrepareRequest(BaseModel):
    recipe: str
    max_instances: int = DEFAULT_MAX_INSTANCES
    split: str | None = None
    seed: int | None = None


class EvaluateRequest(BaseModel):
    recipe: str
    predictions: list[str] | None = None
    echo_target: bool = False
    max_instances: int = DEFAULT_MAX_INSTANCES
    split: str | None = None
    seed: int | None = None
    resamples: int = 1000
    confidence: float = 0.95
    bootstrap_seed: int = 42


def _error_payload(exc: PromptForgeError) -> dict:
    return {"code": exc.code, "message": exc.message, "location": exc.location}


def _clamp_max_instances(requested: int) -> tuple[int, list[str]]:
    if requested <= 0:
        raise PromptForgeError(
            f"max_instances must be positive, got {requested}", code="bad_max_instances"
        )
    if requested > MAX_INSTANCES_CAP:
        return MAX_INSTANCES_CAP, [
            f"max_instances clamped from {requested} to the cap of {MAX_INSTANCES_CAP}"
        ]
    return requested, []


def _select_instances(prepared: PreparedDataset, split: str | None):
    if split is None:
        return prepared.all_instances()
    if split not in prepared.instances:
        raise PromptForgeError(
            f"split {split!r} not in prepared dataset; have {sorted(prepared.instances)}",
            code="bad_split",
        )
    return prepared.instances[split]


def create_app(roots: CatalogRoots, version: str = __version__) -> FastAPI:
    app = FastAPI(title="promptforge", version=version)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(PromptForgeError)
    async def engine_error_handler(_: Request, exc: PromptForgeError) -> JSONResponse:
        status = 404 if isinstance(exc, ArtifactNotFoundError) else 422
        return JSONResponse(status_code=status, content=_error_payload(exc))

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "catalog_roots": [str(root) for root in roots.roots],
            "artifact_count": len(roots),
            "version": version,
        }

    @app.get("/artifacts")
    def list_artifacts(
        kind: str | None = Query(default=None),
        task: str | None = Query(default=None),
    ) -> Any:
        if kind is not None and kind not in KIND_BY_NAMESPACE:
            return JSONResponse(
                status_code=400,
                content={
                    "code": "bad_kind",
                    "message": f"unknown kind {kind!r}; expected one of "
                    + ", ".join(sorted(KIND_BY_NAMESPACE)),
                    "location": "kind",
                },
            )
        if kind is not None:
            ids = roots.list_by_kind(KIND_BY_NAMESPACE[kind])
        else:
            ids = [ArtifactId.parse(i) for i in roots.ids()]
        items = []
        for artifact_id in ids:
            artifact = roots.lookup(artifact_id)
            if task is not None and artifact.body.get("task") != task:
                continue
            item = {
                "id": str(artifact.id),
                "kind": artifact.kind,
                "description": artifact.body.get("description"),
            }
            if "task" in artifact.body:
                item["task"] = artifact.body["task"]
            if "templates" in artifact.body:
                item["templates"] = artifact.body["templates"]
            if "metrics" in artifact.body:
                item["metrics"] = artifact.body["metrics"]
            items.append(item)
        return {"artifacts": items, "count": len(items)}

    @app.get("/artifacts/{artifact_id}")
    def show_artifact(artifact_id: str) -> dict:
        artifact = roots.lookup(ArtifactId.parse(artifact_id))
        return {"id": str(artifact.id), "kind": artifact.kind, "body": artifact.body}

    @app.post("/prepare")
    def prepare_endpoint(request: PrepareRequest) -> dict:
        max_instances, diagnostics = _clamp_max_instances(request.max_instances)
        prepared = prepare_text(
            request.recipe, roots, seed=request.seed, max_instances=max_instances
        )
        instances = _select_instances(prepared, request.split)
        return {
            "canonical_recipe": render_recipe(prepared.recipe.spec),
            "recipe_fingerprint": prepared.recipe_fingerprint,
            "counts": prepared.counts(),
            "dropped_fields": prepared.drop_report.dropped,
            "diagnostics": diagnostics,
            "instances": [inst.to_json_dict() for inst in instances],
        }

    @app.post("/evaluate")
    def evaluate_endpoint(request: EvaluateRequest) -> dict:
        max_instances, diagnostics = _clamp_max_instances(request.max_instances)
        prepared = prepare_text(
            request.recipe, roots, seed=request.seed, max_instances=max_instances
        )
        instances = _select_instances(prepared, request.split)
        if request.echo_target:
            predictions = [inst.target for inst in instances]
        elif request.predictions is not None:
            predictions = request.predictions
        else:
            raise PromptForgeError(
                "provide 'predictions' or set echo_target=true", code="missing_predictions"
            )
        config = BootstrapConfig(
            n_resamples=request.resamples,
            confidence_level=request.confidence,
            seed=request.bootstrap_seed,
        )
        report = evaluate(instances, predictions, roots, config)
        return {
            "canonical_recipe": render_recipe(prepared.recipe.spec),
            "recipe_fingerprint": prepared.recipe_fingerprint,
            "diagnostics": diagnostics,
            "report": report.to_json_dict(),
        }

    @app.post("/recipes/parse")
    def parse_endpoint(request: dict) -> dict:
        text = request.get("recipe")
        if not isinstance(text, str):
            raise PromptForgeError("body must contain a 'recipe' string", code="bad_request")
        spec = parse_recipe(text)
        return {"canonical_recipe": render_recipe(spec)}

    return app
