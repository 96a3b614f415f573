// Thin fetch wrapper over the preparation service. Every call goes through
// request() so error bodies and cancellation behave the same everywhere.

import type {
  ApiErrorBody,
  ArtifactListBody,
  EvaluateBody,
  HealthBody,
  ParseBody,
  PrepareBody,
} from "./types.js";

/** Server rejected the request; carries the structured error body. */
export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly location: string | null;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.location = body.location ?? null;
  }
}

export function resolveApiBase(href: string): string {
  // ?api=http://host:port wins; otherwise talk to the page's own origin.
  const url = new URL(href);
  const override = url.searchParams.get("api");
  if (override) return override.replace(/\/+$/, "");
  return url.origin;
}

async function request<T>(
  base: string,
  path: string,
  init: RequestInit = {},
): Promise<T> {
  let response: Response;
  try {
    response = await fetch(base + path, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") throw err;
    throw new Error(`cannot reach the service at ${base}: ${String(err)}`);
  }
  if (!response.ok) {
    let body: ApiErrorBody;
    try {
      body = (await response.json()) as ApiErrorBody;
    } catch {
      body = { code: "http_error", message: response.statusText, location: null };
    }
    throw new ApiError(response.status, body);
  }
  return (await response.json()) as T;
}

export function getHealth(base: string): Promise<HealthBody> {
  return request<HealthBody>(base, "/health");
}

export function listArtifacts(base: string): Promise<ArtifactListBody> {
  return request<ArtifactListBody>(base, "/artifacts");
}

export interface PrepareParams {
  recipe: string;
  split?: string;
  seed?: number;
  max_instances?: number;
}

export function prepare(
  base: string,
  params: PrepareParams,
  signal?: AbortSignal,
): Promise<PrepareBody> {
  return request<PrepareBody>(base, "/prepare", {
    method: "POST",
    body: JSON.stringify(params),
    signal,
  });
}

export interface EvaluateParams extends PrepareParams {
  predictions?: string[];
  echo_target?: boolean;
  resamples?: number;
}

export function evaluate(
  base: string,
  params: EvaluateParams,
  signal?: AbortSignal,
): Promise<EvaluateBody> {
  return request<EvaluateBody>(base, "/evaluate", {
    method: "POST",
    body: JSON.stringify(params),
    signal,
  });
}

export function parseRecipe(
  base: string,
  recipe: string,
  signal?: AbortSignal,
): Promise<ParseBody> {
  return request<ParseBody>(base, "/recipes/parse", {
    method: "POST",
    body: JSON.stringify({ recipe }),
    signal,
  });
}
