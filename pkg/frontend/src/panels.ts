// Render functions: state in, HTML string out. Prompt text is always
// escaped and placed inside <pre> so the server bytes show verbatim.

import type { EvaluationReport, PrepareBody } from "./types.js";
import { ApiError } from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderPrompts(body: PrepareBody): string {
  if (body.instances.length === 0) {
    return `<p class="hint" data-testid="prompts-empty">No instances in this split.</p>`;
  }
  const blocks = body.instances.map((inst, i) => {
    const meta = `#${i} · split=${escapeHtml(inst.split)} · metric=${escapeHtml(
      inst.metric_ids.join(", "),
    )}`;
    return [
      `<article class="instance" data-testid="instance-${i}">`,
      `<header>${meta}</header>`,
      `<pre class="prompt" data-testid="prompt-${i}">${escapeHtml(inst.source)}</pre>`,
      `<div class="target">target: <code data-testid="target-${i}">${escapeHtml(
        inst.target,
      )}</code></div>`,
      `</article>`,
    ].join("");
  });
  const head =
    `<p class="meta" data-testid="prepare-meta">` +
    `${body.instances.length} instance(s) · fingerprint ` +
    `<code>${escapeHtml(body.recipe_fingerprint.slice(0, 12))}…</code></p>`;
  return head + blocks.join("");
}

export function renderCodeTab(recipe: string, canonical: string, snippets: string): string {
  const match = recipe === canonical;
  const note = match
    ? `<p class="ok" data-testid="canonical-ok">Server canonical form matches.</p>`
    : `<p class="warn" data-testid="canonical-diff">Server canonical form differs:</p>` +
      `<pre data-testid="canonical-recipe">${escapeHtml(canonical)}</pre>`;
  return [
    `<pre class="code" data-testid="recipe-string">${escapeHtml(recipe)}</pre>`,
    note,
    `<h3>Command line</h3>`,
    `<pre class="code" data-testid="cli-snippets">${escapeHtml(snippets)}</pre>`,
  ].join("");
}

function formatScore(value: number): string {
  return value.toFixed(6);
}

export function renderEvaluation(report: EvaluationReport): string {
  const rows = Object.entries(report.global).map(([metric, entry]) => {
    const ci =
      entry.ci_low !== null && entry.ci_high !== null
        ? `[${formatScore(entry.ci_low)}, ${formatScore(entry.ci_high)}]`
        : "n/a";
    return (
      `<tr data-testid="score-${escapeHtml(metric)}">` +
      `<td>${escapeHtml(metric)}</td>` +
      `<td data-testid="score-value-${escapeHtml(metric)}">${formatScore(entry.score)}</td>` +
      `<td data-testid="score-ci-${escapeHtml(metric)}">${ci}</td>` +
      `</tr>`
    );
  });
  return [
    `<table class="scores"><thead><tr><th>metric</th><th>score</th><th>95% CI</th></tr></thead>`,
    `<tbody>${rows.join("")}</tbody></table>`,
    `<p class="meta" data-testid="eval-meta">n=${report.n} · parse failures ` +
      `${(report.parse_failure_rate * 100).toFixed(1)}%</p>`,
  ].join("");
}

export function renderError(err: unknown): string {
  if (err instanceof ApiError) {
    const where = err.location ? ` (${escapeHtml(err.location)})` : "";
    return (
      `<div class="error" data-testid="error-banner">` +
      `<strong>${escapeHtml(err.code)}</strong>${where}: ${escapeHtml(err.message)}</div>`
    );
  }
  const message = err instanceof Error ? err.message : String(err);
  return `<div class="error" data-testid="error-banner">${escapeHtml(message)}</div>`;
}
