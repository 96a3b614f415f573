"""Error types shared across the engine.

Every user-facing failure raises a PromptForgeError subclass carrying a
machine-readable ``code`` and an optional ``location`` (file, recipe key,
instance index, ...) so the CLI and the HTTP service can surface structured
diagnostics.
"""

from __future__ import annotations


class PromptForgeError(Exception):
    """Base class for all engine errors."""

    code = "error"

    def __init__(self, message: str, *, location: str | None = None, code: str | None = None):
        super().__init__(message)
        self.message = message
        self.location = location
        if code is not None:
            self.code = code

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "location": self.location}


class CatalogError(PromptForgeError):
    code = "catalog_error"


class RootNotFoundError(CatalogError):
    code = "root_not_found"


class ArtifactParseError(CatalogError):
    code = "artifact_parse_error"


class DuplicateArtifactError(CatalogError):
    code = "duplicate_artifact"


class ArtifactNotFoundError(CatalogError):
    code = "artifact_not_found"

    def __init__(self, message: str, *, suggestions: list[str] | None = None, location: str | None = None):
        super().__init__(message, location=location)
        self.suggestions = suggestions or []


class ReferenceCycleError(CatalogError):
    code = "reference_cycle"

    def __init__(self, message: str, *, chain: list[str] | None = None, location: str | None = None):
        super().__init__(message, location=location)
        self.chain = chain or []


class KindMismatchError(CatalogError):
    code = "kind_mismatch"


class RecipeSyntaxError(PromptForgeError):
    code = "recipe_syntax_error"


class RecipeValidationError(PromptForgeError):
    code = "recipe_validation_error"


class LoaderError(PromptForgeError):
    code = "loader_error"


class OperatorError(PromptForgeError):
    code = "operator_error"


class SchemaError(PromptForgeError):
    code = "schema_error"


class TemplateError(PromptForgeError):
    code = "template_error"


class FormatError(PromptForgeError):
    code = "format_error"


class PipelineError(PromptForgeError):
    code = "pipeline_error"


class EvaluationError(PromptForgeError):
    code = "evaluation_error"
