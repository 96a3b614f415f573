// Payload shapes of the preparation service. These mirror the server's JSON
// exactly; the UI never derives prompt text on its own.

export interface HealthBody {
  status: string;
  catalog_roots: string[];
  artifact_count: number;
  version: string;
}

export interface ArtifactSummary {
  id: string;
  kind: string;
  description: string | null;
  task?: string;
  templates?: string[];
  metrics?: string[];
}

export interface ArtifactListBody {
  artifacts: ArtifactSummary[];
  count: number;
}

export interface PreparedInstance {
  source: string;
  target: string;
  references: string[];
  postprocessor_ids: string[];
  metric_ids: string[];
  split: string;
  index: number;
  task_data: Record<string, unknown>;
  recipe_fingerprint: string;
}

export interface PrepareBody {
  canonical_recipe: string;
  recipe_fingerprint: string;
  counts: Record<string, number>;
  dropped_fields: Record<string, Record<string, number>>;
  diagnostics: string[];
  instances: PreparedInstance[];
}

export interface ScoreEntry {
  score: number;
  ci_low: number | null;
  ci_high: number | null;
  flags: string[];
}

export interface EvaluationReport {
  n: number;
  parse_failure_rate: number;
  global: Record<string, ScoreEntry>;
  per_instance: Array<Record<string, unknown>>;
}

export interface EvaluateBody {
  canonical_recipe: string;
  recipe_fingerprint: string;
  diagnostics: string[];
  report: EvaluationReport;
}

export interface ParseBody {
  canonical_recipe: string;
}

/** Structured error body the server returns with 4xx statuses. */
export interface ApiErrorBody {
  code: string;
  message: string;
  location: string | null;
}
